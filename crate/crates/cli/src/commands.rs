use std::fs::OpenOptions;
use std::io::{self, BufRead, Write};
use std::path::Path;

use anyhow::{Context, Result};
use ontorag::align::{
    align_pairs, all_pairs, candidate_pairs, read_mappings_tsv, write_mappings_tsv, EmbeddingScorer, LexicalScorer,
    SynonymyScorer,
};
use ontorag::eval::{evaluate_batch, relative_change, EvalRecord};
use ontorag::infiltrate::{infiltrate, AppendMode, InfiltrateOptions};
use ontorag::rag::{answer, chat_repl, AnswerOptions, ChatSession, ChatTurn, EchoLlm, HttpLlm, LlmProvider};
use ontorag::ragstore::{DeterministicEmbedder, EmbeddingProvider, HttpEmbedder, VectorStore, MIN_HASH_DIM};
use ontorag::subsume::{
    accept_scored, build_dictionary, build_subsumption_corpus, read_corpus_tsv, score_subsumptions,
    write_corpus_tsv, write_subsumptions_tsv, Polarity,
};
use serde::Deserialize;

use crate::args::*;
use crate::files::{load_dictionary, load_ontology, load_store, read_text, write_atomic};
use crate::Usage;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Align(a) => align(a),
        Command::Subsume(a) => subsume(a),
        Command::Dict(a) => dict(a),
        Command::Infiltrate(a) => infiltrate_prompts(a),
        Command::Ingest(a) => ingest(a),
        Command::Ask(a) => ask(a),
        Command::Chat(a) => chat(a),
        Command::Eval(a) => eval(a),
    }
}

fn usage(message: impl Into<String>) -> anyhow::Error {
    Usage(message.into()).into()
}

fn check_threshold(name: &str, value: f64) -> Result<()> {
    if value.is_nan() {
        return Err(usage(format!("--{name} must be a number")));
    }
    Ok(())
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    Ok(())
}

fn build_embedder(args: &EmbedArgs) -> Result<(Box<dyn EmbeddingProvider>, Option<usize>)> {
    match &args.provider {
        ProviderSpec::Deterministic => {
            if args.embed_dim < MIN_HASH_DIM {
                return Err(usage(format!("--embed-dim must be at least {MIN_HASH_DIM}")));
            }
            Ok((Box::new(DeterministicEmbedder::new(args.embed_dim)?), None))
        }
        ProviderSpec::Http(url) => {
            if args.embed_dim == 0 {
                return Err(usage("--embed-dim must be positive"));
            }
            let embedder = HttpEmbedder::new(url, &args.embed_model, args.embed_dim)?;
            let in_flight = embedder.max_in_flight();
            Ok((Box::new(embedder), Some(in_flight)))
        }
    }
}

fn build_scorer(args: &ScorerArgs) -> Result<Box<dyn SynonymyScorer>> {
    Ok(match args.scorer {
        ScorerKind::Lexical => Box::new(LexicalScorer),
        ScorerKind::Embedding => {
            let (embedder, in_flight) = build_embedder(&args.embed)?;
            Box::new(EmbeddingScorer::new(embedder, in_flight))
        }
    })
}

fn build_llm(args: &LlmArgs) -> Result<Box<dyn LlmProvider>> {
    Ok(match &args.llm {
        LlmSpec::Echo => Box::new(EchoLlm),
        LlmSpec::Http(url) => Box::new(HttpLlm::new(url, &args.llm_model)?),
    })
}

fn infiltrate_options(args: &InfiltrationArgs) -> InfiltrateOptions {
    InfiltrateOptions {
        max_append_total: args.max_append,
        fuzzy: args.fuzzy,
        mode: if args.bare { AppendMode::Bare } else { AppendMode::Suffix },
    }
}

fn align(args: AlignArgs) -> Result<()> {
    check_threshold("threshold", args.threshold)?;
    let scorer = build_scorer(&args.scorer)?;
    let source = load_ontology(&args.source)?;
    let target = load_ontology(&args.target)?;
    let pairs = if args.no_blocking {
        all_pairs(&source, &target)
    } else {
        candidate_pairs(&source, &target)
    };
    let mappings = align_pairs(&source, &target, &pairs, scorer.as_ref(), args.threshold)?;
    write_atomic(&args.out, write_mappings_tsv(&mappings).as_bytes())?;
    let accepted = mappings.iter().filter(|m| m.accepted).count();
    println!(
        "align: {} candidate pairs, {accepted} accepted at {} -> {}",
        pairs.len(),
        args.threshold,
        args.out.display()
    );
    Ok(())
}

fn subsume(args: SubsumeArgs) -> Result<()> {
    let scorer = build_scorer(&args.scorer)?;
    let source = load_ontology(&args.source)?;
    let target = load_ontology(&args.target)?;
    let mappings = read_mappings_tsv(&read_text(&args.mappings)?)
        .with_context(|| format!("cannot parse mappings {}", args.mappings.display()))?;
    let corpus = build_subsumption_corpus(&source, &target, &mappings, args.negatives, args.seed)?;
    let scored = score_subsumptions(&corpus, &source, &target, scorer.as_ref())?;
    write_atomic(&args.out, write_corpus_tsv(&scored).as_bytes())?;
    let positives = scored.iter().filter(|p| p.polarity == Polarity::Positive).count();
    println!(
        "subsume: {positives} positive and {} negative pairs from {} mappings -> {}",
        scored.len() - positives,
        mappings.len(),
        args.out.display()
    );
    Ok(())
}

fn dict(args: DictArgs) -> Result<()> {
    check_threshold("threshold", args.threshold)?;
    if args.max_per_anchor == 0 {
        return Err(usage("--max-per-anchor must be at least 1"));
    }
    let source = load_ontology(&args.source)?;
    let target = load_ontology(&args.target)?;
    let corpus = read_corpus_tsv(&read_text(&args.corpus)?)
        .with_context(|| format!("cannot parse corpus {}", args.corpus.display()))?;
    let accepted = accept_scored(&corpus, args.threshold)
        .with_context(|| format!("corpus {} is not scored", args.corpus.display()))?;
    let dictionary = build_dictionary(&accepted, &source, &target, args.max_per_anchor)?;
    if let Some(path) = &args.accepted {
        write_atomic(path, write_subsumptions_tsv(&accepted).as_bytes())?;
    }
    write_atomic(&args.out, dictionary.to_json().as_bytes())?;
    println!(
        "dict: {} accepted subsumptions, {} keys -> {}",
        accepted.len(),
        dictionary.len(),
        args.out.display()
    );
    Ok(())
}

fn infiltrate_prompts(args: InfiltrateArgs) -> Result<()> {
    let dictionary = load_dictionary(&args.dict)?;
    let options = infiltrate_options(&args.infiltration);
    let prompts: Vec<String> = match args.prompt {
        Some(p) => vec![p],
        None => io::stdin()
            .lock()
            .lines()
            .collect::<io::Result<Vec<_>>>()
            .context("cannot read prompts from stdin")?
            .into_iter()
            .filter(|l| !l.trim().is_empty())
            .collect(),
    };
    let mut out = io::stdout().lock();
    let mut appended = 0;
    for prompt in &prompts {
        let augmented = infiltrate(prompt, &dictionary, &options);
        writeln!(out, "{}", augmented.text)?;
        if args.trace {
            let trace = serde_json::json!({
                "matched_keys": augmented.matched_keys,
                "appended_terms": augmented.appended_terms,
            });
            eprintln!("{trace}");
        }
        appended += augmented.appended_terms.len();
    }
    out.flush()?;
    eprintln!("infiltrate: {} prompts, {appended} terms appended", prompts.len());
    Ok(())
}

fn document_id(path: &Path) -> Result<String> {
    path.file_name()
        .and_then(|n| n.to_str())
        .map(str::to_string)
        .ok_or_else(|| usage(format!("{} has no usable file name", path.display())))
}

fn ingest(args: IngestArgs) -> Result<()> {
    if args.chunk_size == 0 || args.overlap >= args.chunk_size {
        return Err(usage("--chunk-size must be positive and greater than --overlap"));
    }
    let (embedder, _) = build_embedder(&args.embed)?;
    let mut store = match &args.base {
        Some(base) => load_store(base)?,
        None => VectorStore::new(),
    };
    let mut added = 0;
    for path in &args.documents {
        let id = document_id(path)?;
        let text = read_text(path)?;
        added += store
            .ingest(&id, &text, embedder.as_ref(), args.chunk_size, args.overlap)
            .with_context(|| format!("cannot ingest {}", path.display()))?;
    }
    let mut bytes = Vec::new();
    store.save(&mut bytes)?;
    write_atomic(&args.out, &bytes)?;
    println!(
        "ingest: {} documents, {added} new chunks, {} total -> {}",
        args.documents.len(),
        store.len(),
        args.out.display()
    );
    Ok(())
}

struct Loaded {
    store: VectorStore,
    dictionary: ontorag::subsume::SubsumptionDictionary,
    embedder: Box<dyn EmbeddingProvider>,
    llm: Box<dyn LlmProvider>,
}

fn load_session(
    store: &Path,
    dict: &Path,
    embed: &EmbedArgs,
    llm: &LlmArgs,
) -> Result<Loaded> {
    let (embedder, _) = build_embedder(embed)?;
    let llm = build_llm(llm)?;
    let store = load_store(store)?;
    let dictionary = load_dictionary(dict)?;
    if store.provider() != embedder.name() {
        eprintln!(
            "warning: store was embedded with `{}`, querying with `{}`",
            store.provider(),
            embedder.name()
        );
    }
    Ok(Loaded { store, dictionary, embedder, llm })
}

fn session_options(args: &SessionArgs) -> Result<AnswerOptions> {
    check_k(args.retrieval.k)?;
    Ok(AnswerOptions {
        k: args.retrieval.k,
        use_subsumptions: args.retrieval.use_subsumptions(),
        infiltrate: infiltrate_options(&args.infiltration),
    })
}

fn print_trace(turn: &ChatTurn) {
    eprintln!("appended: {}", turn.augmented_prompt.appended_terms.join(", "));
    for chunk in &turn.retrieved {
        eprintln!("retrieved: {} {:.6}", chunk.id, chunk.score);
    }
}

fn ask(args: AskArgs) -> Result<()> {
    let options = session_options(&args.session)?;
    let s = &args.session;
    let loaded = load_session(&s.store, &s.dict, &s.embed, &s.llm)?;
    let turn = answer(
        &args.prompt,
        &loaded.dictionary,
        &loaded.store,
        loaded.embedder.as_ref(),
        loaded.llm.as_ref(),
        &options,
    )?;
    println!("{}", turn.response);
    if args.trace {
        print_trace(&turn);
    }
    if let Some(path) = &args.out {
        let mut json = serde_json::to_string_pretty(&turn)?;
        json.push('\n');
        write_atomic(path, json.as_bytes())?;
    }
    Ok(())
}

fn chat(args: ChatArgs) -> Result<()> {
    let options = session_options(&args.session)?;
    let s = &args.session;
    let loaded = load_session(&s.store, &s.dict, &s.embed, &s.llm)?;
    let log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&args.log)
        .with_context(|| format!("cannot open log {}", args.log.display()))?;
    let session = ChatSession {
        dict: &loaded.dictionary,
        store: &loaded.store,
        embedder: loaded.embedder.as_ref(),
        llm: loaded.llm.as_ref(),
        options,
        trace: args.trace,
    };
    let turns = chat_repl(&session, io::stdin().lock(), io::stdout().lock(), log)?;
    eprintln!("chat: {turns} turns logged to {}", args.log.display());
    Ok(())
}

#[derive(Deserialize)]
struct Question {
    prompt: String,
    ground_truth: String,
}

fn read_dataset(path: &Path) -> Result<Vec<Question>> {
    let text = read_text(path)?;
    let mut questions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: not a {{prompt, ground_truth}} object", path.display(), i + 1))?;
        questions.push(q);
    }
    if questions.is_empty() {
        anyhow::bail!("{} contains no questions", path.display());
    }
    Ok(questions)
}

fn turns_jsonl(turns: &[ChatTurn]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for turn in turns {
        serde_json::to_writer(&mut out, turn)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn eval(args: EvalArgs) -> Result<()> {
    check_k(args.k)?;
    let loaded = load_session(&args.store, &args.dict, &args.embed, &args.llm)?;
    let questions = read_dataset(&args.dataset)?;
    let run = |use_subsumptions: bool| -> Result<(Vec<ChatTurn>, Vec<EvalRecord>)> {
        let options = AnswerOptions {
            k: args.k,
            use_subsumptions,
            infiltrate: infiltrate_options(&args.infiltration),
        };
        let mut turns = Vec::new();
        let mut records = Vec::new();
        for (i, q) in questions.iter().enumerate() {
            let turn = answer(
                &q.prompt,
                &loaded.dictionary,
                &loaded.store,
                loaded.embedder.as_ref(),
                loaded.llm.as_ref(),
                &options,
            )
            .with_context(|| format!("question {} of {}", i + 1, args.dataset.display()))?;
            records.push(EvalRecord {
                prompt: q.prompt.clone(),
                augmented_prompt: use_subsumptions.then(|| turn.augmented_prompt.text.clone()),
                response: turn.response.clone(),
                ground_truth: q.ground_truth.clone(),
            });
            turns.push(turn);
        }
        Ok((turns, records))
    };
    let (turns_with, records_with) = run(true)?;
    let (turns_without, records_without) = run(false)?;
    let tables = evaluate_batch(&records_with, &records_without, loaded.embedder.as_ref())?;

    let dir = &args.out_dir;
    write_atomic(&dir.join("with_subsumptions.jsonl"), &turns_jsonl(&turns_with)?)?;
    write_atomic(&dir.join("without_subsumptions.jsonl"), &turns_jsonl(&turns_without)?)?;
    write_atomic(&dir.join("tables.tsv"), tables.to_tsv().as_bytes())?;

    let h_with = tables.with_subsumptions.report.index.cosine_pct;
    let h_without = tables.without_subsumptions.report.index.cosine_pct;
    let change = relative_change(h_with, h_without)
        .map(|c| format!("{c:+.4}%"))
        .unwrap_or_else(|_| "n/a".into());
    println!(
        "eval: {} questions, hallucination index (cosine) {h_with:.4} with vs {h_without:.4} without ({change}) -> {}",
        questions.len(),
        dir.display()
    );
    Ok(())
}
