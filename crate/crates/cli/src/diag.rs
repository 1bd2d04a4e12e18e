//! `cpi diag`: analyses over the artifacts of a finished run. Reports are
//! JSON files under the output directory (also echoed to stdout);
//! histograms are additionally written as TSV tables.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use cpi_core::diagnostics::{
    control_comparison, correlation_report, heuristic_scores, histogram_tsv, kept_dropped_histograms, textonly_displacement,
};
use cpi_core::pipeline::artifacts::{read_jsonl, write_json, write_jsonl};
use cpi_core::pipeline::{
    rank_select, read_manifest, write_manifest, AlignmentRecord, ManifestEntry, SelectionManifest, ALIGNMENT_FILE,
    ALIGN_MANIFEST_FILE, CPI_MANIFEST_FILE, INTERVENTIONS_FILE, SCORES_FILE,
};
use cpi_core::{CategoryLexicon, ExclusionLexicon, Intervention, NonceForge, PasRecord, Sample};
use serde::Serialize;
use serde_json::json;

use crate::{DiagCommand, Failure, Session};

pub const CORR_REPORT: &str = "diag_corr.json";
pub const HIST_REPORT: &str = "diag_hist.json";
pub const HEURISTICS_FILE: &str = "heuristics.jsonl";
pub const HEURISTICS_REPORT: &str = "diag_heuristics.json";
pub const DISPLACEMENT_FILE: &str = "displacement.jsonl";
pub const DISPLACEMENT_REPORT: &str = "diag_displacement.json";
pub const CONTROLS_REPORT: &str = "diag_controls.json";

fn artifact<T>(out_dir: &Path, name: &str, read: impl FnOnce(&Path) -> Result<T, cpi_core::PipelineError>) -> Result<T, Failure> {
    let path = out_dir.join(name);
    if !path.is_file() {
        return Err(Failure::data(format!("{} is missing; run the pipeline into this directory first", path.display())));
    }
    Ok(read(&path)?)
}

fn report(out_dir: &Path, name: &str, value: serde_json::Value) -> Result<serde_json::Value, Failure> {
    write_json(&out_dir.join(name), &value)?;
    Ok(value)
}

pub fn run(session: &Session, which: DiagCommand) -> Result<serde_json::Value, Failure> {
    let out = session.cfg.out_dir.as_path();
    match which {
        DiagCommand::Corr => corr(out),
        DiagCommand::Hist { bins } => hist(out, bins),
        DiagCommand::Heuristics => heuristics(session, out),
        DiagCommand::Displacement { limit } => displacement(session, out, limit),
        DiagCommand::Controls { n } => controls(session, out, n),
    }
}

/// Valid scored records paired with their alignment.
fn scored_pool(out: &Path) -> Result<(Vec<PasRecord>, HashMap<String, f64>), Failure> {
    let records: Vec<PasRecord> = artifact(out, SCORES_FILE, read_jsonl)?;
    let alignments: Vec<AlignmentRecord> = artifact(out, ALIGNMENT_FILE, read_jsonl)?;
    let by_id = alignments.into_iter().map(|a| (a.id, a.alignment)).collect();
    Ok((records.into_iter().filter(|r| r.valid).collect(), by_id))
}

fn aligned(records: &[PasRecord], alignment: &HashMap<String, f64>) -> Result<Vec<f64>, Failure> {
    records
        .iter()
        .map(|r| {
            alignment
                .get(&r.sample_id)
                .copied()
                .ok_or_else(|| Failure::data(format!("no alignment recorded for {}", r.sample_id)))
        })
        .collect()
}

fn corr(out: &Path) -> Result<serde_json::Value, Failure> {
    let (records, alignment) = scored_pool(out)?;
    let align = aligned(&records, &alignment)?;
    let scores: Vec<f64> = records.iter().map(|r| r.score.expect("valid")).collect();
    let mus: Vec<f64> = records.iter().map(|r| r.mu.expect("valid")).collect();
    let reports = vec![
        correlation_report("score", &scores, "alignment", &align)?,
        correlation_report("mu", &mus, "alignment", &align)?,
    ];
    report(out, CORR_REPORT, json!({ "reports": reports }))
}

fn hist(out: &Path, bins: usize) -> Result<serde_json::Value, Failure> {
    if bins == 0 {
        return Err(Failure::Config(vec![crate::config::Violation {
            field: "bins",
            message: "must be at least 1".into(),
        }]));
    }
    let (records, alignment) = scored_pool(out)?;
    let manifest = artifact(out, CPI_MANIFEST_FILE, read_manifest)?;
    let kept: HashSet<String> = manifest.ids().map(str::to_string).collect();
    let ids: Vec<String> = records.iter().map(|r| r.sample_id.clone()).collect();
    let scores: Vec<f64> = records.iter().map(|r| r.score.expect("valid")).collect();
    let align = aligned(&records, &alignment)?;
    let distributions = kept_dropped_histograms(&ids, &scores, &align, &kept, bins)?;
    let mut tables = Vec::new();
    for kd in &distributions {
        let name = format!("diag_hist_{}.tsv", kd.variable);
        let path = out.join(&name);
        std::fs::write(&path, histogram_tsv(kd)).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        tables.push(name);
    }
    report(out, HIST_REPORT, json!({ "distributions": distributions, "tables": tables }))
}

/// The stage-1 pool in corpus order.
fn pool<'c>(session: &Session, corpus: &'c cpi_core::Corpus) -> Result<Vec<(&'c Sample, &'c str)>, Failure> {
    let align: SelectionManifest = artifact(&session.cfg.out_dir, ALIGN_MANIFEST_FILE, read_manifest)?;
    let ids: HashSet<&str> = align.ids().collect();
    Ok(corpus
        .samples
        .iter()
        .zip(&corpus.captions)
        .filter(|(s, _)| ids.contains(s.id.as_str()))
        .map(|(s, c)| (s, c.as_str()))
        .collect())
}

fn heuristics(session: &Session, out: &Path) -> Result<serde_json::Value, Failure> {
    let corpus = session.corpus()?;
    let scores = heuristic_scores(&corpus, session.cfg.pipeline.max_k);
    write_jsonl(&out.join(HEURISTICS_FILE), &scores)?;
    let in_pool: HashSet<&str> = pool(session, &corpus)?.into_iter().map(|(s, _)| s.id.as_str()).collect();
    let target = session.cfg.pipeline.target_fraction;
    let mut manifests = Vec::new();
    for (signal, value) in [
        ("caption_length", (|h: &cpi_core::diagnostics::HeuristicScore| h.caption_length) as fn(&_) -> usize),
        ("phrase_count", |h| h.phrase_count),
    ] {
        let entries: Vec<ManifestEntry> = scores
            .iter()
            .filter(|h| in_pool.contains(h.id.as_str()))
            .map(|h| ManifestEntry {
                id: h.id.clone(),
                score: value(h) as f64,
            })
            .collect();
        let m = rank_select(entries, 0, corpus.len(), target)?.with_provenance(&session.cfg.pipeline.digest(&session.scorer.backend_id()), &corpus.digest);
        let name = format!("baseline_{signal}_manifest.jsonl");
        write_manifest(&out.join(&name), &m)?;
        manifests.push(json!({"signal": signal, "file": name, "kept": m.len(), "threshold": m.header.threshold}));
    }
    report(out, HEURISTICS_REPORT, json!({ "samples": scores.len(), "file": HEURISTICS_FILE, "baselines": manifests }))
}

#[derive(Serialize)]
struct DisplacementRow<'a> {
    sample_id: &'a str,
    phrase_index: usize,
    delta: f64,
    displacement: f64,
}

fn displacement(session: &Session, out: &Path, limit: usize) -> Result<serde_json::Value, Failure> {
    let corpus = session.corpus()?;
    let interventions: Vec<Intervention> = artifact(out, INTERVENTIONS_FILE, read_jsonl)?;
    let records: Vec<PasRecord> = artifact(out, SCORES_FILE, read_jsonl)?;
    let captions: HashMap<&str, &str> = corpus.samples.iter().zip(&corpus.captions).map(|(s, c)| (s.id.as_str(), c.as_str())).collect();
    let deltas: HashMap<&str, &[f64]> = records.iter().map(|r| (r.sample_id.as_str(), r.deltas.as_slice())).collect();
    // Drops are stored per sample in the order of its valid interventions.
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    for iv in interventions.iter().filter(|i| i.is_valid()) {
        if rows.len() == limit {
            break;
        }
        let id = iv.sample_id.as_str();
        let slot = seen.entry(id).or_insert(0);
        let (Some(caption), Some(d)) = (captions.get(id), deltas.get(id).and_then(|d| d.get(*slot))) else {
            return Err(Failure::data(format!("{id}: interventions and scores disagree; rerun the pipeline")));
        };
        *slot += 1;
        pairs.push((caption.to_string(), iv.perturbed_caption.clone().expect("valid")));
        rows.push((id, iv.phrase_index, *d));
    }
    let disp = textonly_displacement(session.scorer.as_ref(), &pairs)?;
    let table: Vec<DisplacementRow> = rows
        .iter()
        .zip(&disp)
        .map(|(&(sample_id, phrase_index, delta), &displacement)| DisplacementRow {
            sample_id,
            phrase_index,
            delta,
            displacement,
        })
        .collect();
    write_jsonl(&out.join(DISPLACEMENT_FILE), &table)?;
    let deltas: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let corr = correlation_report("delta", &deltas, "text_displacement", &disp)?;
    report(
        out,
        DISPLACEMENT_REPORT,
        json!({
            "metric": "1 - cosine(text(T), text(T_perturbed))",
            "n": table.len(),
            "file": DISPLACEMENT_FILE,
            "correlation": corr,
        }),
    )
}

fn controls(session: &Session, out: &Path, n: usize) -> Result<serde_json::Value, Failure> {
    let corpus = session.corpus()?;
    let samples = pool(session, &corpus)?;
    let forge = NonceForge::new(&session.vocab, ExclusionLexicon::bundled());
    let cfg = &session.cfg.pipeline;
    let results = control_comparison(
        &samples,
        n,
        session.scorer.as_ref(),
        &forge,
        CategoryLexicon::bundled(),
        cfg.max_k,
        &cfg.seed_salt,
    )?;
    report(out, CONTROLS_REPORT, json!({ "requested": n, "results": results }))
}
