use wasmql::corpus::{compare_results, operator_kinds, random_catalog, CorpusConfig, PlanGen};
use wasmql::interp::{interpret, interpret_with, JoinStrategy};
use wasmql::query::{compile_query, CompileOptions, FilterStyle};
use wasmql::runtime::{execute, EngineKind, OptLevel};

fn check_corpus(seed: u64, plans: usize, cfg: CorpusConfig, options: &CompileOptions, engine: EngineKind) -> Vec<&'static str> {
    let cat = random_catalog(seed, &cfg);
    let mut gen = PlanGen::new(seed ^ 0x5eed, &cat, cfg);
    let adapter = engine.adapter(OptLevel::Fast);
    let mut kinds = Vec::new();
    for i in 0..plans {
        let plan = gen.plan();
        kinds.extend(operator_kinds(&plan));
        let expected = interpret(&plan, &cat).unwrap();
        let nested = interpret_with(&plan, &cat, JoinStrategy::NestedLoop).unwrap();
        compare_results(&plan, &cat, &expected, &nested).unwrap_or_else(|e| panic!("oracle paths disagree on plan {i}: {e}\n{plan:?}"));
        let compiled = compile_query(&plan, &cat, options).unwrap_or_else(|e| panic!("plan {i}: {e}\n{plan:?}"));
        let got = execute(&compiled, &cat, adapter.as_ref()).unwrap_or_else(|e| panic!("plan {i}: {e}\n{plan:?}"));
        compare_results(&plan, &cat, &expected, &got.table).unwrap_or_else(|e| panic!("seed {seed} plan {i}: {e}\n{plan:?}"));
    }
    kinds.sort_unstable();
    kinds.dedup();
    kinds
}

#[test]
fn random_plans_match_the_interpreter() {
    let cfg = CorpusConfig { max_rows: 2_000, ..Default::default() };
    let mut kinds = Vec::new();
    for seed in 0..4 {
        kinds.extend(check_corpus(seed, 15, cfg, &CompileOptions::default(), EngineKind::Wasmtime));
    }
    kinds.sort_unstable();
    kinds.dedup();
    assert_eq!(kinds.len(), 6, "{kinds:?}");
}

#[test]
fn branchless_and_never_short_circuit_agree() {
    let cfg = CorpusConfig { max_rows: 1_000, ..Default::default() };
    let options = CompileOptions {
        filter_style: FilterStyle::Branchless,
        short_circuit: wasmql::codegen::ShortCircuit::Never,
        ..Default::default()
    };
    check_corpus(11, 30, cfg, &options, EngineKind::Wasmtime);
}

#[test]
fn wasmi_agrees_with_the_interpreter() {
    let cfg = CorpusConfig { max_rows: 500, ..Default::default() };
    check_corpus(21, 30, cfg, &CompileOptions::default(), EngineKind::Wasmi);
}

#[test]
fn tiny_regions_and_windows_agree() {
    let cfg = CorpusConfig { max_rows: 1_500, ..Default::default() };
    let options = CompileOptions {
        result_bytes: 256,
        window_bytes: Some(4096),
        initial_ht_capacity: 8,
        short_circuit: wasmql::codegen::ShortCircuit::Always,
        ..Default::default()
    };
    check_corpus(31, 30, cfg, &options, EngineKind::Wasmtime);
}
