//! Synthetic inputs shared by the benchmarks.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use ptmevo_core::Multiset;

/// Two snapshots over `ids` identifiers with counts in 0..=4.
pub fn snapshot_pair(ids: usize, seed: u64) -> (Multiset<String>, Multiset<String>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut draw = || {
        let mut m = Multiset::new();
        for i in 0..ids {
            m.insert_n(format!("org/model-{i}"), rng.random_range(0..=4));
        }
        m
    };
    (draw(), draw())
}

/// A Python module with `calls` loader calls mixing literal, variable,
/// conditional and attribute arguments.
pub fn python_module(calls: usize) -> String {
    let mut src = String::from(
        "import os\nimport spacy\nfrom transformers import AutoModel, pipeline\n\nDEFAULT = \"bert-base-uncased\"\n\n",
    );
    for i in 0..calls {
        match i % 4 {
            0 => src.push_str(&format!("m{i} = AutoModel.from_pretrained(\"org/model-{i}\")\n")),
            1 => src.push_str(&format!("m{i} = AutoModel.from_pretrained(DEFAULT)\n")),
            2 => src.push_str(&format!(
                "if os.environ.get(\"BIG\"):\n    name{i} = \"org/large-{i}\"\nelse:\n    name{i} = \"org/small-{i}\"\nm{i} = pipeline(\"fill-mask\", model=name{i})\n"
            )),
            _ => src.push_str(&format!(
                "\n\nclass Loader{i}:\n    checkpoint = \"en_core_web_sm\"\n\n    def load(self):\n        return spacy.load(self.checkpoint)\n\n\n"
            )),
        }
    }
    src
}

/// Two independent samples of small positive values, as cadences look.
pub fn samples(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut draw = || {
        (0..n)
            .map(|_| rng.random_range(1..=40) as f64 / 4.0)
            .collect()
    };
    (draw(), draw())
}
