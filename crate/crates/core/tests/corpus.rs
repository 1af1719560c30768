//! Planned evaluation agrees with direct evaluation on every corpus spec,
//! after every prefix of its trace.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use specfission::runtime::{serve, Embedded, HttpEndpoint, Loader, Runtime, ServeConfig, ValueCache};
use specfission::session::{check, parse_trace};
use specfission::spec::parse_spec;

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus")
}

fn specs() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(corpus())
        .unwrap()
        .filter_map(|e| e.unwrap().file_name().into_string().ok())
        .filter_map(|n| n.strip_suffix(".vg.json").map(str::to_string))
        .collect();
    names.sort();
    names
}

fn check_all(cache_bytes: usize) {
    let loader = Loader::new(corpus());
    for name in specs() {
        let spec = parse_spec(&std::fs::read(corpus().join(format!("{name}.vg.json"))).unwrap()).unwrap();
        let trace = parse_trace(&std::fs::read(corpus().join(format!("{name}.trace.json"))).unwrap()).unwrap();
        let endpoint = Embedded(Arc::new(Runtime::new(ValueCache::new(cache_bytes), loader.clone())));
        let report = check(&spec, &trace, &endpoint, &loader).unwrap();
        assert!(report.passed(), "{name}: {:?}", report.mismatches);
        assert_eq!(report.prefixes, trace.len() + 1, "{name}");
        assert!(!report.datasets.is_empty(), "{name}");
    }
}

#[test]
fn corpus_has_seven_specs() {
    assert_eq!(specs().len(), 7);
}

#[test]
fn corpus_parity() {
    check_all(1 << 30);
}

#[test]
fn corpus_parity_with_a_tiny_cache() {
    check_all(4096);
}

#[test]
fn corpus_parity_over_http() {
    let server = serve(&ServeConfig {
        data_root: corpus(),
        threads: 2,
        ..ServeConfig::default()
    })
    .unwrap();
    let endpoint = HttpEndpoint::new(&server.addr().to_string());
    let loader = Loader::new(corpus());
    let spec = parse_spec(&std::fs::read(corpus().join("crossfilter_3hist.vg.json")).unwrap()).unwrap();
    let trace = parse_trace(&std::fs::read(corpus().join("crossfilter_3hist.trace.json")).unwrap()).unwrap();
    let report = check(&spec, &trace, &endpoint, &loader).unwrap();
    assert!(report.passed(), "{:?}", report.mismatches);
    server.shutdown();
}
