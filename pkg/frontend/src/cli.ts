#!/usr/bin/env node
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { SchemaError } from "./csv.js";
import { KINDS, render, type FigureKind } from "./render.js";

function main(): void {
  yargs(hideBin(process.argv))
    .scriptName("ballpiston-figures")
    .command(
      "render <kind> <csv...>",
      "draw a figure from ballpiston CSV artifacts",
      (y) =>
        y
          .positional("kind", {
            describe: "figure kind",
            choices: KINDS,
            type: "string",
          })
          .positional("csv", {
            describe: "input CSV artifact(s)",
            type: "string",
            array: true,
          })
          .option("output", {
            alias: "o",
            describe: "output image path (.svg or .png)",
            type: "string",
            demandOption: true,
          }),
      (argv) => {
        try {
          const { empty } = render({
            kind: argv.kind as FigureKind,
            inputs: argv.csv as string[],
            output: argv.output,
          });
          for (const p of empty) {
            process.stderr.write(`warning: no data rows in ${p}\n`);
          }
        } catch (e) {
          if (e instanceof SchemaError) {
            process.stderr.write(`error: ${e.message}\n`);
            process.exitCode = 1;
            return;
          }
          throw e;
        }
      },
    )
    .demandCommand(1)
    .strict()
    .parserConfiguration({ "parse-numbers": false })
    .parse();
}

main();
