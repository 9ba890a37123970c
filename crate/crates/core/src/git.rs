//! Thin read-only wrapper around the `git` command-line client.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GitError {
    #[error("failed to run git: {0}")]
    Spawn(#[from] std::io::Error),
    #[error("git {args} failed ({status}): {stderr}")]
    Command {
        args: String,
        status: i32,
        stderr: String,
    },
    #[error("unexpected git output: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagRef {
    pub name: String,
    /// Peeled commit id.
    pub commit: String,
    /// Message of an annotated tag.
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchRef {
    pub name: String,
    pub tip: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeEntry {
    pub path: String,
    pub blob: String,
}

/// One record of `git diff --raw`. Copies are reported as additions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffEntry {
    /// `A`, `D`, `M`, `R` or `T`.
    pub status: char,
    pub old_path: Option<String>,
    pub new_path: Option<String>,
    pub old_blob: Option<String>,
    pub new_blob: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitInfo {
    pub id: String,
    pub time: i64,
}

#[derive(Debug, Clone)]
pub struct Repo {
    root: PathBuf,
}

impl Repo {
    pub fn open(path: &Path) -> Result<Self, GitError> {
        let repo = Repo {
            root: path.to_path_buf(),
        };
        repo.run(&["rev-parse", "--git-dir"])?;
        Ok(repo)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn command(&self) -> Command {
        let mut c = Command::new("git");
        c.arg("-C").arg(&self.root);
        c.env("GIT_CONFIG_NOSYSTEM", "1");
        c.env("LC_ALL", "C");
        c
    }

    fn output(&self, args: &[&str]) -> Result<std::process::Output, GitError> {
        Ok(self.command().args(args).output()?)
    }

    pub fn run(&self, args: &[&str]) -> Result<Vec<u8>, GitError> {
        let out = self.output(args)?;
        if !out.status.success() {
            return Err(GitError::Command {
                args: args.join(" "),
                status: out.status.code().unwrap_or(-1),
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        Ok(out.stdout)
    }

    fn run_text(&self, args: &[&str]) -> Result<String, GitError> {
        let out = self.run(args)?;
        String::from_utf8(out).map_err(|e| GitError::Parse(e.to_string()))
    }

    pub fn tags(&self) -> Result<Vec<TagRef>, GitError> {
        let text = self.run_text(&[
            "for-each-ref",
            "--sort=refname",
            "--format=%(refname:strip=2)%1f%(objecttype)%1f%(objectname)%1f%(*objectname)%1f%(*objecttype)%1f%(contents)%1e",
            "refs/tags",
        ])?;
        let mut tags = Vec::new();
        for rec in text.split('\x1e') {
            let rec = rec.trim_start_matches('\n');
            if rec.is_empty() {
                continue;
            }
            let f: Vec<&str> = rec.splitn(6, '\x1f').collect();
            if f.len() < 6 {
                return Err(GitError::Parse(format!("tag record: {rec:?}")));
            }
            let (commit, message) = match f[1] {
                "commit" => (f[2].to_string(), None),
                "tag" if f[4] == "commit" => {
                    let m = f[5].trim_end().to_string();
                    (f[3].to_string(), Some(m))
                }
                // tags of trees or blobs are not releases
                _ => continue,
            };
            tags.push(TagRef {
                name: f[0].to_string(),
                commit,
                message,
            });
        }
        Ok(tags)
    }

    /// Local and remote-tracking branches; a remote branch identical to a
    /// local one of the same short name is reported once.
    pub fn branches(&self) -> Result<Vec<BranchRef>, GitError> {
        let text = self.run_text(&[
            "for-each-ref",
            "--sort=refname",
            "--format=%(refname)%1f%(objectname)%1f%(symref)",
            "refs/heads",
            "refs/remotes",
        ])?;
        let mut out: Vec<BranchRef> = Vec::new();
        let mut seen = HashSet::new();
        for line in text.lines() {
            let f: Vec<&str> = line.split('\x1f').collect();
            if f.len() < 3 || !f[2].is_empty() {
                continue;
            }
            let (name, short) = if let Some(n) = f[0].strip_prefix("refs/heads/") {
                (n.to_string(), n.to_string())
            } else if let Some(n) = f[0].strip_prefix("refs/remotes/") {
                let short = n.split_once('/').map_or(n, |(_, b)| b).to_string();
                (n.to_string(), short)
            } else {
                continue;
            };
            if seen.insert((short, f[1].to_string())) {
                out.push(BranchRef {
                    name,
                    tip: f[1].to_string(),
                });
            }
        }
        Ok(out)
    }

    /// First-parent chain ending at `tip`, oldest first.
    pub fn first_parent(&self, tip: &str) -> Result<Vec<CommitInfo>, GitError> {
        let text = self.run_text(&["log", "--first-parent", "--format=%H %ct", tip])?;
        let mut v = Vec::new();
        for line in text.lines() {
            let (id, t) = line
                .split_once(' ')
                .ok_or_else(|| GitError::Parse(line.to_string()))?;
            let time = t.parse().map_err(|_| GitError::Parse(line.to_string()))?;
            v.push(CommitInfo {
                id: id.to_string(),
                time,
            });
        }
        v.reverse();
        Ok(v)
    }

    /// Every commit reachable from `tip`.
    pub fn ancestors(&self, tip: &str) -> Result<HashSet<String>, GitError> {
        let text = self.run_text(&["rev-list", tip])?;
        Ok(text.lines().map(str::to_string).collect())
    }

    pub fn commit_time(&self, commit: &str) -> Result<i64, GitError> {
        let t = self.run_text(&["show", "-s", "--format=%ct", commit])?;
        t.trim()
            .parse()
            .map_err(|_| GitError::Parse(format!("commit time {t:?}")))
    }

    pub fn commit_message(&self, commit: &str) -> Result<String, GitError> {
        Ok(self
            .run_text(&["show", "-s", "--format=%B", commit])?
            .trim_end()
            .to_string())
    }

    pub fn ls_tree(&self, commit: &str) -> Result<Vec<TreeEntry>, GitError> {
        let out = self.run(&["ls-tree", "-r", "-z", "--full-tree", commit])?;
        let mut v = Vec::new();
        for rec in out.split(|b| *b == 0) {
            if rec.is_empty() {
                continue;
            }
            let rec = String::from_utf8_lossy(rec);
            let (meta, path) = rec
                .split_once('\t')
                .ok_or_else(|| GitError::Parse(rec.to_string()))?;
            let f: Vec<&str> = meta.split(' ').collect();
            if f.len() == 3 && f[1] == "blob" {
                v.push(TreeEntry {
                    path: path.to_string(),
                    blob: f[2].to_string(),
                });
            }
        }
        Ok(v)
    }

    /// Reads blobs in one `cat-file --batch` session, in request order.
    pub fn read_blobs(&self, ids: &[String]) -> Result<Vec<Vec<u8>>, GitError> {
        if ids.is_empty() {
            return Ok(Vec::new());
        }
        let mut child = self
            .command()
            .args(["cat-file", "--batch"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let input: String = ids.iter().map(|i| format!("{i}\n")).collect();
        let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
        let mut reader = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let mut header = String::new();
            reader.read_line(&mut header)?;
            let f: Vec<&str> = header.split_whitespace().collect();
            if f.len() != 3 {
                return Err(GitError::Parse(format!("cat-file {id}: {header:?}")));
            }
            let size: usize = f[2].parse().map_err(|_| GitError::Parse(header.clone()))?;
            let mut buf = vec![0u8; size + 1];
            reader.read_exact(&mut buf)?;
            buf.pop();
            out.push(buf);
        }
        writer
            .join()
            .map_err(|_| GitError::Parse("cat-file writer panicked".into()))??;
        child.wait()?;
        Ok(out)
    }

    /// Changed paths between two trees with blob ids on both sides and
    /// rename detection at git's default similarity threshold.
    pub fn diff_raw(&self, from: &str, to: &str) -> Result<Vec<DiffEntry>, GitError> {
        let out = self.run(&["diff", "--raw", "-z", "-M", "--no-abbrev", from, to])?;
        let parts: Vec<String> = out
            .split(|b| *b == 0)
            .map(|p| String::from_utf8_lossy(p).into_owned())
            .collect();
        let blob = |s: &str| (!s.bytes().all(|b| b == b'0')).then(|| s.to_string());
        let mut v = Vec::new();
        let mut i = 0;
        while i < parts.len() {
            let meta = &parts[i];
            if meta.is_empty() {
                i += 1;
                continue;
            }
            let f: Vec<&str> = meta.trim_start_matches(':').split(' ').collect();
            if f.len() != 5 {
                return Err(GitError::Parse(format!("diff record {meta:?}")));
            }
            let status = f[4].chars().next().unwrap_or('M');
            let two_paths = matches!(status, 'R' | 'C');
            let need = if two_paths { 3 } else { 2 };
            if i + need > parts.len() {
                return Err(GitError::Parse("truncated diff record".into()));
            }
            let p1 = parts[i + 1].clone();
            let (old_path, new_path) = match status {
                'A' => (None, Some(p1)),
                'D' => (Some(p1), None),
                'R' => (Some(p1), Some(parts[i + 2].clone())),
                'C' => (None, Some(parts[i + 2].clone())),
                _ => (Some(p1.clone()), Some(p1)),
            };
            v.push(DiffEntry {
                status: if status == 'C' { 'A' } else { status },
                old_path,
                new_path,
                old_blob: if status == 'C' { None } else { blob(f[2]) },
                new_blob: blob(f[3]),
            });
            i += need;
        }
        Ok(v)
    }

    /// Id of the empty tree in this repository's hash format.
    pub fn empty_tree(&self) -> Result<String, GitError> {
        let out = self
            .command()
            .args(["hash-object", "-t", "tree", "--stdin"])
            .stdin(Stdio::null())
            .output()?;
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }

    /// First parent of `commit`, if any.
    pub fn parent(&self, commit: &str) -> Result<Option<String>, GitError> {
        let out = self.output(&["rev-parse", "--verify", "-q", &format!("{commit}^1")])?;
        if out.status.success() {
            Ok(Some(
                String::from_utf8_lossy(&out.stdout).trim().to_string(),
            ))
        } else {
            Ok(None)
        }
    }

    /// Contents of `path` at `rev`, or `None` if the path does not exist.
    pub fn show_file(&self, rev: &str, path: &str) -> Result<Option<Vec<u8>>, GitError> {
        let out = self.output(&["cat-file", "blob", &format!("{rev}:{path}")])?;
        Ok(out.status.success().then_some(out.stdout))
    }
}
