#!/usr/bin/env node
import { parseArgs } from 'node:util';
import { pathToFileURL } from 'node:url';
import { extractEmbeddings, extractProbs } from './extract.js';
import { knownModels } from './backbone.js';

const USAGE = `usage: embed-extract <embed|probs> --model <id> --images <dir> --out <file> [--manifest <file>]

  embed   write pooled features as an XPRT embedding file
  probs   write multilabel sigmoid outputs as a PROB file

Builtin models: ${knownModels().join(', ')}
--model also accepts a path to a JSON checkpoint.`;

export function main(argv: string[]): number {
  const command = argv[0];
  if (command === undefined || command === '--help' || command === '-h') {
    console.log(USAGE);
    return command === undefined ? 2 : 0;
  }
  if (command !== 'embed' && command !== 'probs') {
    console.error(`unknown command ${JSON.stringify(command)}\n${USAGE}`);
    return 2;
  }
  let values;
  try {
    values = parseArgs({
      args: argv.slice(1),
      options: {
        model: { type: 'string' },
        images: { type: 'string' },
        out: { type: 'string' },
        manifest: { type: 'string' },
      },
    }).values;
  } catch (e) {
    console.error(`${e instanceof Error ? e.message : e}\n${USAGE}`);
    return 2;
  }
  if (!values.model || !values.images || !values.out) {
    console.error(`--model, --images and --out are required\n${USAGE}`);
    return 2;
  }
  const job = { model: values.model, inputDir: values.images,
                outPath: values.out, manifestPath: values.manifest };
  try {
    if (command === 'embed') {
      const { n, d } = extractEmbeddings(job);
      console.log(`wrote ${n} x ${d} embeddings to ${job.outPath}`);
    } else {
      const { n, k } = extractProbs(job);
      console.log(`wrote ${n} x ${k} probabilities to ${job.outPath}`);
    }
  } catch (e) {
    console.error(e instanceof Error ? e.message : String(e));
    return 1;
  }
  return 0;
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(main(process.argv.slice(2)));
}
