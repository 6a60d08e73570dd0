//! Synthetic Python corpus and shared fixtures for the integration tests.
#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use linecomp::config::EngineConfig;
use linecomp::prep::{document_for, train_lm, train_tokenizer, PrepOptions};
use linecomp::Engine;
use linecomp_core::corpus::{split_corpus, Segment};
use linecomp_core::{CorpusFile, SplitSpec};

const NOUNS: &[&str] = &[
    "item", "user", "record", "node", "value", "path", "name", "config", "entry", "token", "row", "key",
    "message", "event", "task", "result", "line", "word", "block", "field",
];
const VERBS: &[&str] = &[
    "load", "save", "parse", "build", "update", "process", "compute", "find", "check", "render", "read",
    "write", "create", "remove", "get", "validate",
];
const CLASSES: &[&str] = &[
    "Parser", "Cache", "Node", "Record", "Handler", "Manager", "Client", "Store", "Buffer", "Reader",
    "Writer", "Tracker", "Registry", "Queue", "Session",
];
const IMPORTS: &[&str] = &[
    "import os",
    "import sys",
    "import json",
    "import re",
    "import logging",
    "import time",
    "from typing import List, Dict, Optional",
    "from collections import defaultdict",
    "from pathlib import Path",
    "import numpy as np",
    "from dataclasses import dataclass",
];
const WORDS: &[&str] = &[
    "the", "list", "of", "values", "is", "sorted", "before", "use", "skip", "empty", "entries", "keep",
    "order", "for", "now", "note", "this", "may", "change", "later", "naïve", "approach",
];

struct Style {
    indent: String,
    quote: char,
}

struct Gen {
    rng: ChaCha8Rng,
    style: Style,
    lines: Vec<String>,
}

impl Gen {
    fn pick<'a>(&mut self, xs: &[&'a str]) -> &'a str {
        xs.choose(&mut self.rng).copied().unwrap()
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn emit(&mut self, depth: usize, line: impl AsRef<str>) {
        let mut s = self.style.indent.repeat(depth);
        s.push_str(line.as_ref());
        self.lines.push(s);
    }

    fn q(&self, s: &str) -> String {
        format!("{0}{1}{0}", self.style.quote, s)
    }

    fn comment(&mut self) -> String {
        let n = self.rng.gen_range(2..6);
        let words: Vec<&str> = (0..n).map(|_| self.pick(WORDS)).collect();
        format!("# {}", words.join(" "))
    }

    fn maybe_comment(&mut self, depth: usize) {
        if self.chance(0.12) {
            let c = self.comment();
            self.emit(depth, c);
        }
    }

    fn statement(&mut self, depth: usize, args: &[String]) {
        let noun = self.pick(NOUNS);
        let arg = args.first().cloned().unwrap_or_else(|| "items".to_string());
        match self.rng.gen_range(0..14) {
            0 => {
                self.emit(depth, format!("for i in range(len({arg})):"));
                self.emit(depth + 1, format!("if {arg}[i] is None:"));
                self.emit(depth + 2, "continue");
                self.emit(depth + 1, format!("result.append({arg}[i])"));
            }
            1 => {
                self.emit(depth, format!("for {noun} in {arg}:"));
                self.emit(depth + 1, format!("if not {noun}:"));
                self.emit(depth + 2, "continue");
                self.emit(depth + 1, format!("result.append({noun})"));
            }
            2 => {
                let key = self.q(noun);
                self.emit(depth, format!("{noun} = {arg}.get({key}, None)"));
                self.emit(depth, format!("if {noun} is None:"));
                let msg = self.q(&format!("missing {noun}"));
                self.emit(depth + 1, format!("raise ValueError({msg})"));
            }
            3 => {
                let msg = self.q(&format!("# of {noun}s:"));
                self.emit(depth, format!("print({msg}, len({arg}))"));
            }
            4 => {
                self.emit(depth, format!("with open({arg}, {}) as f:", self.q("r")));
                self.emit(depth + 1, "data = json.load(f)");
                self.emit(depth, "result.append(data)");
            }
            5 => {
                self.emit(depth, "try:");
                self.emit(depth + 1, format!("value = int({arg})"));
                self.emit(depth, "except ValueError:");
                self.emit(depth + 1, "value = 0");
                self.emit(depth, "result.append(value)");
            }
            6 => {
                let c = self.comment();
                self.emit(depth, format!("result.extend(sorted({arg}))  {c}"));
            }
            7 => {
                self.emit(depth, format!("logger.info({}, {arg})", self.q(&format!("{noun} %s"))));
            }
            8 => {
                self.emit(depth, format!("counts = defaultdict(int)"));
                self.emit(depth, format!("for {noun} in {arg}:"));
                self.emit(depth + 1, format!("counts[{noun}] += 1"));
                self.emit(depth, "result.append(counts)");
            }
            9 => {
                self.emit(depth, format!("if len({arg}) > MAX_SIZE:"));
                self.emit(depth + 1, format!("{arg} = {arg}[:MAX_SIZE]"));
            }
            10 => {
                self.emit(depth, format!("while {arg}:"));
                self.emit(depth + 1, format!("{noun} = {arg}.pop()"));
                self.emit(depth + 1, format!("result.append({noun})"));
            }
            11 => {
                self.emit(depth, format!("result = [x for x in {arg} if x is not None]"));
            }
            12 => {
                let url = self.q("http://example.org/docs#section");
                self.emit(depth, format!("url = {url}"));
            }
            _ => {
                let s = self.q("héllo wörld");
                self.emit(depth, format!("greeting = {s}"));
            }
        }
    }

    fn function(&mut self, depth: usize, method: bool) {
        let verb = self.pick(VERBS);
        let noun = self.pick(NOUNS);
        let n_args = self.rng.gen_range(1..3);
        let mut args: Vec<String> = Vec::new();
        for _ in 0..n_args {
            let a = format!("{}s", self.pick(NOUNS));
            if !args.contains(&a) {
                args.push(a);
            }
        }
        let mut params = args.clone();
        if method {
            params.insert(0, "self".into());
        }
        self.maybe_comment(depth);
        self.emit(depth, format!("def {verb}_{noun}({}):", params.join(", ")));
        if self.chance(0.4) {
            let doc = format!("{0}{0}{0}{1} the {2}.{0}{0}{0}", '"', capitalize(verb), noun);
            self.emit(depth + 1, doc);
        }
        self.emit(depth + 1, "result = []");
        for _ in 0..self.rng.gen_range(1..4) {
            self.maybe_comment(depth + 1);
            self.statement(depth + 1, &args);
        }
        self.emit(depth + 1, "return result");
        self.lines.push(String::new());
    }

    fn class(&mut self) {
        let name = self.pick(CLASSES);
        let a = self.pick(NOUNS);
        let mut b = self.pick(NOUNS);
        if b == a {
            b = "size";
        }
        self.emit(0, format!("class {name}(object):"));
        self.emit(1, format!("{0}{0}{0}{name} keeps {a} data.{0}{0}{0}", '"'));
        self.lines.push(String::new());
        self.emit(1, format!("def __init__(self, {a}, {b}=None):"));
        self.emit(2, format!("self.{a} = {a}"));
        self.emit(2, format!("self.{b} = {b}"));
        self.lines.push(String::new());
        self.emit(1, format!("def get_{a}(self):"));
        self.emit(2, format!("return self.{a}"));
        self.lines.push(String::new());
        for _ in 0..self.rng.gen_range(1..3) {
            self.function(1, true);
        }
        self.emit(1, "def __repr__(self):");
        self.emit(2, format!("return {} % (self.{a},)", self.q(&format!("{name}(%r)"))));
        self.lines.push(String::new());
    }

    fn module(&mut self) -> String {
        if self.chance(0.2) {
            self.emit(0, "# -*- coding: utf-8 -*-");
        }
        if self.chance(0.5) {
            let topic = self.pick(NOUNS);
            self.emit(0, format!("{0}{0}{0}Helpers for {topic} handling.{0}{0}{0}", '"'));
        }
        let mut imports: Vec<&str> = IMPORTS.to_vec();
        imports.shuffle(&mut self.rng);
        let n = self.rng.gen_range(1..5);
        let mut chosen: Vec<&str> = imports[..n].to_vec();
        chosen.sort();
        for i in chosen {
            self.emit(0, i);
        }
        if self.chance(0.3) {
            self.emit(0, "from .models import (");
            let x = self.pick(CLASSES);
            let y = self.pick(CLASSES);
            self.emit(1, format!("{x},"));
            self.emit(1, format!("{y},"));
            self.emit(0, ")");
        }
        self.lines.push(String::new());
        self.emit(0, "logger = logging.getLogger(__name__)");
        let size = self.rng.gen_range(1..64) * 16;
        self.emit(0, format!("MAX_SIZE = {size}"));
        self.lines.push(String::new());
        for _ in 0..self.rng.gen_range(1..4) {
            if self.chance(0.4) {
                self.class();
            } else {
                self.function(0, false);
            }
        }
        if self.chance(0.5) {
            self.emit(0, "if __name__ == \"__main__\":");
            self.emit(1, "main()");
        }
        let mut text = self.lines.join("\n");
        text.push('\n');
        text
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// `repos` repositories of 6 to 10 Python files each.
pub fn desk_corpus(repos: usize, seed: u64) -> Vec<CorpusFile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut files = Vec::new();
    for r in 0..repos {
        let indent = match rng.gen_range(0..10) {
            0 => "\t".to_string(),
            1 => "  ".to_string(),
            _ => "    ".to_string(),
        };
        let quote = if rng.gen_bool(0.7) { '"' } else { '\'' };
        let n = rng.gen_range(6..11);
        for f in 0..n {
            let style = Style { indent: indent.clone(), quote };
            let mut gen = Gen { rng: ChaCha8Rng::seed_from_u64(rng.gen()), style, lines: Vec::new() };
            let text = gen.module();
            let dir = if f % 3 == 0 { "pkg/" } else { "" };
            files.push(CorpusFile::new(format!("repo{r:03}"), format!("{dir}mod_{f}.py"), text));
        }
    }
    files
}

pub fn write_corpus(root: &Path, files: &[CorpusFile]) {
    for f in files {
        linecomp::io::write_file(&root.join(f.file_id()), &f.text).unwrap();
    }
}

/// Trained artifacts over the train segment of a desk corpus.
pub struct Fixture {
    pub files: Vec<CorpusFile>,
    pub train: Vec<CorpusFile>,
    pub test: Vec<CorpusFile>,
    pub engine: Arc<Engine>,
}

pub fn fixture(repos: usize, vocab_size: usize, order: usize) -> Fixture {
    let files = desk_corpus(repos, 7);
    let spec = SplitSpec::default();
    let split = split_corpus(&files, &spec).unwrap();
    let options = PrepOptions::default();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut docs = Vec::new();
    for f in &files {
        match split.segment_of(&spec, &f.repo_id).unwrap() {
            Segment::Train => {
                docs.push(document_for(f, Segment::Train, &options));
                train.push(f.clone());
            }
            Segment::Test => test.push(f.clone()),
            Segment::Validation => {}
        }
    }
    let (tokenizer, _) = train_tokenizer(&docs, vocab_size).unwrap();
    let model = train_lm(&docs, &tokenizer, order).unwrap();
    let config = EngineConfig::new("", "");
    let engine = Arc::new(Engine::new(tokenizer, model, config).unwrap());
    Fixture { files, train, test, engine }
}
