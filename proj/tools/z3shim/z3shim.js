#!/usr/bin/env node
// SMT-LIB 2 REPL over stdin/stdout, backed by the z3 wasm build.
// Commands are evaluated once the input is parenthesis-balanced at a line
// boundary; output of each batch is written back immediately. This mirrors
// the behaviour of `z3 -in` closely enough for a solver subprocess.

'use strict';

const { init } = require('z3-solver');

function balance(text) {
  let depth = 0;
  let inString = false;
  let inComment = false;
  for (const ch of text) {
    if (inComment) {
      if (ch === '\n') inComment = false;
      continue;
    }
    if (inString) {
      if (ch === '"') inString = false;
      continue;
    }
    if (ch === '"') inString = true;
    else if (ch === ';') inComment = true;
    else if (ch === '(') depth++;
    else if (ch === ')') depth--;
  }
  return depth;
}

(async () => {
  const { Z3 } = await init();
  const cfg = Z3.mk_config();
  const ctx = Z3.mk_context(cfg);

  let buffer = '';
  process.stdin.setEncoding('utf8');
  for await (const chunk of process.stdin) {
    buffer += chunk;
    let nl;
    let pending = '';
    // consume full lines; evaluate once balanced
    while ((nl = buffer.indexOf('\n')) >= 0) {
      pending += buffer.slice(0, nl + 1);
      buffer = buffer.slice(nl + 1);
      if (balance(pending) !== 0) continue;
      const script = pending;
      pending = '';
      if (script.trim() === '(exit)') process.exit(0);
      if (script.trim().length === 0) continue;
      try {
        const out = await Z3.eval_smtlib2_string(ctx, script);
        if (out.length > 0) process.stdout.write(out);
      } catch (e) {
        process.stdout.write(`(error "${String(e).replace(/"/g, "'")}")\n`);
      }
    }
    buffer = pending + buffer;
  }
  process.exit(0);
})();
