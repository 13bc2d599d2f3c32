//! Fixtures shared by the benchmarks.

use foliation_core::dulac::{corpus_chains, DulacChainSpec};
use foliation_core::holonomy::{corpus_paths, CorpusPath};
use foliation_core::pseudogroup::{corpus_germs, CorpusGerm};
use foliation_core::MeromorphicOneForm;

/// Forms of increasing size for the `Ω₁` solver.
pub fn omega1_forms() -> Vec<(&'static str, MeromorphicOneForm)> {
    [
        ("radial", "x dy - y dx"),
        ("siegel", "(2 + x) * x dy + (1 + y^2) * y dx"),
        ("cubic", "(x^3 - y^2 + x*y) dx + (y^3 + x^2 - 2*x*y) dy"),
    ]
    .into_iter()
    .map(|(name, text)| (name, MeromorphicOneForm::parse(text).expect("fixture parses")))
    .collect()
}

pub fn path(name: &str) -> CorpusPath {
    corpus_paths().into_iter().find(|p| p.name == name).expect("corpus path")
}

pub fn chains() -> Vec<DulacChainSpec> {
    corpus_chains()
}

pub fn germ(name: &str) -> CorpusGerm {
    corpus_germs().into_iter().find(|g| g.name == name).expect("corpus germ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_load() {
        assert_eq!(omega1_forms().len(), 3);
        assert!(!chains().is_empty());
        let _ = path("linear_loop");
        let _ = germ("sqrt_fifth");
    }
}
