mod common;

use std::collections::HashSet;

use cpi_core::pipeline::{read_corpus, Corpus, Pipeline, PipelineConfig, PipelineError, Sample, SpanAnnotation, StopAfter, DEFAULT_RHO_GRID, RANK_RESOLUTION};
use cpi_core::phrase::SpanKind;
use cpi_core::scoring::{Scorer, SyntheticScorer};

fn demo() -> Corpus {
    read_corpus(common::repo_root().join("data/demo_corpus.jsonl")).unwrap()
}

fn files(dir: &std::path::Path) -> Vec<(String, String)> {
    ["align_manifest.jsonl", "phrases.jsonl", "interventions.jsonl", "scores.jsonl", "cpi_manifest.jsonl", "summary.json"]
        .iter()
        .map(|f| (f.to_string(), std::fs::read_to_string(dir.join(f)).unwrap()))
        .collect()
}

#[test]
fn demo_run_counts_and_subset_chain() {
    let corpus = demo();
    let dir = tempfile::tempdir().unwrap();
    let scorer = SyntheticScorer::default();
    let out = Pipeline::new(PipelineConfig::default(), &scorer, common::vocab(), dir.path())
        .run(&corpus, StopAfter::Select)
        .unwrap();
    let align = out.align.unwrap();
    let cpi = out.cpi.unwrap();
    assert_eq!(align.len(), 700);
    assert_eq!(cpi.len(), 500);
    let pool: HashSet<&str> = align.ids().collect();
    assert!(cpi.ids().all(|id| pool.contains(id)));
    let s = out.summary.unwrap();
    assert_eq!(s.valid + s.excluded_invalid, s.stage1_pool);
    assert_eq!(s.kept, 500);
    assert!(cpi.entries.windows(2).all(|w| {
        let gap = w[0].score - w[1].score;
        gap > RANK_RESOLUTION || (gap.abs() <= RANK_RESOLUTION && w[0].id < w[1].id)
    }));
}

#[test]
fn rerun_is_byte_identical_and_resumes() {
    let corpus = demo();
    let scorer = SyntheticScorer::default();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let p = |d: &std::path::Path| Pipeline::new(PipelineConfig::default(), &scorer, common::vocab(), d).run(&corpus, StopAfter::Select).unwrap();
    p(a.path());
    let first = files(a.path());
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    single.install(|| p(b.path()));
    assert_eq!(first, files(b.path()));

    let events = std::sync::Mutex::new(Vec::new());
    let log = |e: &cpi_core::pipeline::Progress| events.lock().unwrap().push((e.stage, e.resumed));
    Pipeline::new(PipelineConfig::default(), &scorer, common::vocab(), a.path())
        .with_progress(&log)
        .run(&corpus, StopAfter::Select)
        .unwrap();
    assert!(events.lock().unwrap().iter().all(|&(_, resumed)| resumed));
    assert_eq!(first, files(a.path()));

    std::fs::write(a.path().join("scores.jsonl"), "tampered\n").unwrap();
    events.lock().unwrap().clear();
    Pipeline::new(PipelineConfig::default(), &scorer, common::vocab(), a.path())
        .with_progress(&log)
        .run(&corpus, StopAfter::Select)
        .unwrap();
    let ev = events.lock().unwrap();
    assert!(ev.contains(&("forge", true)) && ev.contains(&("score", false)));
    for (x, y) in first.iter().zip(files(a.path())) {
        let d = x.1.lines().zip(y.1.lines()).find(|(a, b)| a != b);
        assert!(x.1 == y.1, "{} differs after resume: {d:?}", x.0);
    }
}

#[test]
fn refuses_to_mix_backends() {
    let corpus = demo();
    let dir = tempfile::tempdir().unwrap();
    let s1 = SyntheticScorer::new(256);
    let s2 = SyntheticScorer::new(512);
    Pipeline::new(PipelineConfig::default(), &s1, common::vocab(), dir.path()).run(&corpus, StopAfter::Align).unwrap();
    let err = Pipeline::new(PipelineConfig::default(), &s2, common::vocab(), dir.path())
        .run(&corpus, StopAfter::Select)
        .unwrap_err();
    assert!(matches!(err, PipelineError::BackendMismatch { .. }), "{err}");
    assert_ne!(s1.backend_id(), s2.backend_id());
}

#[test]
fn single_sample_corpus_fails_with_stage_label() {
    let corpus = Corpus::from_samples(vec![Sample {
        id: "only".into(),
        image: "synth:dog bench".into(),
        caption: "a dog on a bench".into(),
        alignment: None,
        spans: None,
    }])
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let scorer = SyntheticScorer::default();
    let err = Pipeline::new(PipelineConfig::default(), &scorer, common::vocab(), dir.path())
        .run(&corpus, StopAfter::Select)
        .unwrap_err();
    assert!(matches!(err, PipelineError::Stage { stage: "score", .. }), "{err}");
    assert!(err.to_string().contains("degenerate pool"));
}

#[test]
fn sweep_grid_counts() {
    let corpus = demo();
    let dir = tempfile::tempdir().unwrap();
    let scorer = SyntheticScorer::default();
    let ms = Pipeline::new(PipelineConfig::default(), &scorer, common::vocab(), dir.path())
        .sweep(&corpus, &DEFAULT_RHO_GRID)
        .unwrap();
    assert_eq!(ms.iter().map(|m| m.len()).collect::<Vec<_>>(), [1000, 900, 800, 700, 600, 500]);
    for w in ms.windows(2) {
        let outer: HashSet<&str> = w[0].ids().collect();
        assert!(w[1].ids().all(|id| outer.contains(id)));
    }
    assert!(dir.path().join("sweep_rho0.70.jsonl").exists());
}

#[test]
fn annotated_spans_override_extraction_and_skip_closed_class_heads() {
    let mk = |spans| Sample {
        id: "x".into(),
        image: "synth:dog".into(),
        caption: "a dog on a bench".into(),
        alignment: Some(0.5),
        spans,
    };
    let dir = tempfile::tempdir().unwrap();
    let scorer = SyntheticScorer::default();
    let p = Pipeline::new(PipelineConfig::default(), &scorer, common::vocab(), dir.path());
    let caption = "a dog on a bench";
    let ann = vec![
        SpanAnnotation { start_word: 0, end_word: 1, kind: SpanKind::Object, head_word: 1 },
        SpanAnnotation { start_word: 2, end_word: 2, kind: SpanKind::Relation, head_word: 2 },
    ];
    let spans = p.phrases_for(&mk(Some(ann)), caption);
    assert_eq!(spans.len(), 1);
    assert_eq!(spans[0].head, 1);
    assert_eq!(p.phrases_for(&mk(Some(vec![])), caption).len(), 0);
    assert_eq!(p.phrases_for(&mk(None), caption).len(), 2);
}
