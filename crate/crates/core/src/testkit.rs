//! Scripted git repositories for tests and benchmarks.
//!
//! Commits get fixed author data and caller-chosen dates, so a script
//! always yields the same object ids.

use std::path::{Path, PathBuf};
use std::process::Command;

use chrono::{DateTime, Duration, TimeZone, Utc};

pub struct FixtureRepo {
    root: PathBuf,
    /// Date of the most recent commit or tag.
    clock: DateTime<Utc>,
}

/// Day `n` counted from 2025-01-06.
pub fn day(n: i64) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 6, 12, 0, 0).unwrap() + Duration::days(n)
}

impl FixtureRepo {
    /// Initializes an empty repository on branch `main`.
    pub fn init(root: &Path) -> FixtureRepo {
        std::fs::create_dir_all(root).expect("create fixture dir");
        let r = FixtureRepo {
            root: root.to_path_buf(),
            clock: day(0),
        };
        r.git(&["init", "-q", "-b", "main"]);
        r.git(&["config", "user.name", "Fixture"]);
        r.git(&["config", "user.email", "fixture@example.com"]);
        r.git(&["config", "commit.gpgsign", "false"]);
        r.git(&["config", "tag.gpgsign", "false"]);
        r
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn git(&self, args: &[&str]) -> String {
        let date = self.clock.to_rfc3339();
        let out = Command::new("git")
            .arg("-C")
            .arg(&self.root)
            .args(args)
            .env("GIT_CONFIG_NOSYSTEM", "1")
            .env("GIT_AUTHOR_DATE", &date)
            .env("GIT_COMMITTER_DATE", &date)
            .env("LC_ALL", "C")
            .output()
            .expect("run git");
        assert!(
            out.status.success(),
            "git {:?} failed: {}",
            args,
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8_lossy(&out.stdout).trim().to_string()
    }

    pub fn write(&self, path: &str, content: &str) -> &Self {
        let p = self.root.join(path);
        if let Some(d) = p.parent() {
            std::fs::create_dir_all(d).expect("create parent");
        }
        std::fs::write(p, content).expect("write fixture file");
        self
    }

    pub fn remove(&self, path: &str) -> &Self {
        self.git(&["rm", "-q", path]);
        self
    }

    pub fn rename(&self, from: &str, to: &str) -> &Self {
        if let Some(d) = self.root.join(to).parent() {
            std::fs::create_dir_all(d).expect("create parent");
        }
        self.git(&["mv", from, to]);
        self
    }

    /// Stages everything and commits on day `d`. Returns the commit id.
    pub fn commit(&mut self, message: &str, d: i64) -> String {
        self.clock = day(d);
        self.git(&["add", "-A"]);
        self.git(&["commit", "-q", "--allow-empty", "-m", message]);
        self.head()
    }

    pub fn head(&self) -> String {
        self.git(&["rev-parse", "HEAD"])
    }

    /// Lightweight tag on HEAD.
    pub fn tag(&self, name: &str) -> &Self {
        self.git(&["tag", name]);
        self
    }

    /// Annotated tag on HEAD; the message doubles as release notes.
    pub fn tag_annotated(&self, name: &str, message: &str) -> &Self {
        self.git(&["tag", "-a", name, "-m", message]);
        self
    }

    pub fn branch(&self, name: &str, at: &str) -> &Self {
        self.git(&["branch", name, at]);
        self
    }

    pub fn checkout(&self, name: &str) -> &Self {
        self.git(&["checkout", "-q", name]);
        self
    }

    /// Merge commit (never fast-forward) of `branch` into HEAD on day `d`.
    pub fn merge(&mut self, branch: &str, message: &str, d: i64) -> String {
        self.clock = day(d);
        self.git(&["merge", "-q", "--no-ff", "-m", message, branch]);
        self.head()
    }
}

/// Two small repositories with scripted PTM and manifest histories, their
/// sidecars, a confirmed migration verdict, curated library pairs and a run
/// configuration. Annotation sheets are left to the caller.
pub struct Scenario {
    pub root: PathBuf,
    /// Commit ids by script label (`c1`..`c9`).
    pub alpha: std::collections::BTreeMap<&'static str, String>,
    /// Commit ids by script label (`c1`..`c5`).
    pub beta: std::collections::BTreeMap<&'static str, String>,
    pub config: PathBuf,
}

const ALPHA_MODEL_V1: &str = "from transformers import AutoModel


def encoder():
    return AutoModel.from_pretrained(\"bert-base-uncased\")


def pooled():
    return AutoModel.from_pretrained(\"bert-base-uncased\")
";

const ALPHA_MODEL_V2: &str = "from transformers import AutoModel


def encoder():
    # roberta-base copes better with short texts
    return AutoModel.from_pretrained(\"roberta-base\")


def pooled():
    return AutoModel.from_pretrained(\"bert-base-uncased\")
";

const ALPHA_GEN: &str = "from transformers import pipeline

# small model keeps latency low
generator = pipeline(\"text-generation\", model=\"gpt2\")
";

const ALPHA_SUMMARIZE: &str = "from transformers import pipeline

summarizer = pipeline(\"summarization\", model=\"t5-small\")
fallback = pipeline(\"summarization\", model=\"t5-small\")
";

const BETA_APP_V1: &str = "from transformers import AutoTokenizer

tokenizer = AutoTokenizer.from_pretrained(\"distilbert-base-uncased\")
";

const BETA_APP_V2: &str = "from transformers import AutoTokenizer

tokenizer = AutoTokenizer.from_pretrained(\"distilbert-base-uncased\")
cased = AutoTokenizer.from_pretrained(\"bert-base-cased\")
";

const BETA_APP_V3: &str = "from transformers import AutoTokenizer
from sentence_transformers import SentenceTransformer

tokenizer = AutoTokenizer.from_pretrained(\"distilbert-base-uncased\")
cased = AutoTokenizer.from_pretrained(\"bert-base-cased\")

# sentence embeddings power semantic search
encoder = SentenceTransformer(\"all-MiniLM-L6-v2\")
";

const BETA_CLF: &str = "from transformers import AutoModelForSequenceClassification

model = AutoModelForSequenceClassification.from_pretrained(\"distilbert-base-uncased\")
";

fn pyproject(deps: &[&str]) -> String {
    let list: Vec<String> = deps.iter().map(|d| format!("\"{d}\"")).collect();
    format!(
        "[project]\nname = \"beta\"\nversion = \"1.0.0\"\ndependencies = [{}]\n",
        list.join(", ")
    )
}

pub fn scenario(root: &Path) -> Scenario {
    use std::collections::BTreeMap;
    let mut alpha = BTreeMap::new();
    let mut a = FixtureRepo::init(&root.join("alpha"));
    a.write("README.md", "# alpha\n\nA small text toolkit.\n")
        .write("app/__init__.py", "__version__ = \"0.1.0\"\n")
        .write(
            "app/cli.py",
            "import sys\n\n\ndef main():\n    print(sys.argv)\n",
        )
        .write("requirements.txt", "requests==2.31.0\n");
    alpha.insert("c1", a.commit("Initial import", 0));
    a.tag("v0.1.0");
    a.write("app/model.py", ALPHA_MODEL_V1).write(
        "requirements.txt",
        "requests==2.31.0\ntransformers==4.30.0\n",
    );
    alpha.insert("c2", a.commit("Add BERT encoder", 30));
    a.tag("v0.2.0");
    a.write("app/gen.py", ALPHA_GEN).write(
        "requirements.txt",
        "requests==2.31.0\ntransformers==4.30.0\ntorch>=2.0\n",
    );
    alpha.insert("c3", a.commit("Add text generation with gpt2 (#3)", 45));
    a.write("app/__init__.py", "__version__ = \"0.3.0\"\n");
    alpha.insert("c4", a.commit("Bump version to 0.3.0", 60));
    a.tag("v0.3.0");
    a.write("app/model.py", ALPHA_MODEL_V2).write(
        "requirements.txt",
        "requests==2.31.0\ntransformers==4.35.0\ntorch>=2.0\n",
    );
    alpha.insert(
        "c5",
        a.commit(
            "Switch encoder to roberta-base for better accuracy on short texts",
            75,
        ),
    );
    a.write(
        "CHANGELOG.md",
        "# Changelog\n\n## 0.4.0\n\n- Encoder now uses roberta-base.\n",
    );
    alpha.insert("c6", a.commit("Update changelog", 90));
    a.tag("v0.4.0");
    a.write("README.md", "# alpha\n\nA small toolkit for text.\n")
        .write(
            "requirements.txt",
            "requests==2.32.0\ntransformers==4.35.0\ntorch>=2.0\n",
        );
    alpha.insert("c7", a.commit("Fix typo in README and bump requests", 120));
    a.tag("v0.5.0");
    a.remove("app/gen.py").write(
        "requirements.txt",
        "requests==2.32.0\ntransformers==4.35.0\n",
    );
    alpha.insert("c8", a.commit("Remove generation feature", 135));
    a.write("app/summarize.py", ALPHA_SUMMARIZE);
    alpha.insert("c9", a.commit("Add summarizer", 150));
    a.tag("v0.6.0");

    let mut beta = BTreeMap::new();
    let mut b = FixtureRepo::init(&root.join("beta"));
    b.write("README.md", "# beta\n")
        .write("app.py", BETA_APP_V1)
        .write(
            "pyproject.toml",
            &pyproject(&["transformers==4.30.0", "flask>=2.3"]),
        );
    beta.insert("c1", b.commit("Initial import", 10));
    b.tag_annotated("v1.0.0", "Initial release");
    b.write("app.py", BETA_APP_V2).write(
        "pyproject.toml",
        &pyproject(&["transformers==4.30.0", "flask>=2.3", "numpy>=1.24"]),
    );
    beta.insert("c2", b.commit("Add cased tokenizer", 30));
    b.tag_annotated("v1.1.0", "Adds a cased tokenizer for proper nouns.");
    b.write("clf.py", BETA_CLF).write(
        "pyproject.toml",
        &pyproject(&["transformers==4.30.0", "fastapi>=0.110", "numpy>=1.24"]),
    );
    beta.insert(
        "c3",
        b.commit(
            "Add classifier (#7)\n\nReplace flask with fastapi for async request handling.",
            50,
        ),
    );
    b.tag_annotated("v1.2.0", "Release 1.2.0");
    b.write("README.md", "# beta\n\nUsage notes.\n");
    beta.insert("c4", b.commit("Expand README", 70));
    b.tag_annotated("v1.3.0", "Docs");
    b.write("app.py", BETA_APP_V3);
    beta.insert("c5", b.commit("Add sentence encoder", 90));
    b.tag_annotated("v1.4.0", "Release 1.4.0");

    let w = |name: &str, text: &str| {
        std::fs::write(root.join(name), text).expect("write scenario file");
    };
    w(
        "alpha_releases.jsonl",
        "{\"tag\":\"v0.4.0\",\"body\":\"Encoder switched to roberta-base for better accuracy.\"}\n",
    );
    w(
        "alpha_issues.jsonl",
        "{\"number\":3,\"title\":\"Add text generation\",\"body\":\"Adds gpt2 generation so users can draft replies faster.\",\"kind\":\"pr\"}\n",
    );
    w(
        "beta_issues.jsonl",
        "{\"number\":7,\"title\":\"Need a classifier\",\"kind\":\"issue\"}\n",
    );
    w(
        "migrations.csv",
        &format!(
            "line_id,pair_index,file,commit,ptm_from,ptm_to,verdict,note\nalpha@main,2,app/model.py,{},bert-base-uncased,roberta-base,Y,encoder swap\n",
            &alpha["c5"][..10]
        ),
    );
    w("analogous_pairs.csv", "name_a,name_b\nflask,fastapi\n");
    let config = root.join("run.toml");
    w(
        "run.toml",
        "out = \"out\"\n\n[[repos]]\npath = \"alpha\"\nreleases = \"alpha_releases.jsonl\"\nissues = \"alpha_issues.jsonl\"\n\n[[repos]]\npath = \"beta\"\nissues = \"beta_issues.jsonl\"\n\n[annotations]\nmigrations = \"migrations.csv\"\nanalogous_pairs = \"analogous_pairs.csv\"\n",
    );
    Scenario {
        root: root.to_path_buf(),
        alpha,
        beta,
        config,
    }
}
