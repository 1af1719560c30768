use std::io::Read;
use std::path::{Component, Path, PathBuf};

use crate::spec::DataFormat;
use crate::table::{ingest_csv, ingest_json, CsvOptions, Table, TableError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LoadError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("fetch of {url} failed: {message}")]
    Fetch { url: String, message: String },
    #[error("cannot ingest {url}: {cause}")]
    Ingest { url: String, cause: TableError },
    #[error("unsupported format for {0}")]
    UnsupportedFormat(String),
}

/// Resolves and reads dataset urls. Bare paths and `file://` urls are
/// confined to the data root.
#[derive(Debug, Clone)]
pub struct Loader {
    data_root: PathBuf,
}

impl Loader {
    pub fn new(data_root: impl Into<PathBuf>) -> Loader {
        Loader {
            data_root: data_root.into(),
        }
    }

    pub fn data_root(&self) -> &Path {
        &self.data_root
    }

    fn resolve(&self, url: &str, rel: &str) -> Result<PathBuf, LoadError> {
        let rel = Path::new(rel.trim_start_matches("./"));
        let escapes = rel
            .components()
            .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir));
        if escapes {
            return Err(LoadError::NotFound(url.to_string()));
        }
        Ok(self.data_root.join(rel))
    }

    pub fn fetch(&self, url: &str) -> Result<Vec<u8>, LoadError> {
        if url.starts_with("http://") || url.starts_with("https://") {
            let response = ureq::get(url).call().map_err(|e| match e {
                ureq::Error::Status(404, _) => LoadError::NotFound(url.to_string()),
                other => LoadError::Fetch {
                    url: url.to_string(),
                    message: other.to_string(),
                },
            })?;
            let mut body = Vec::new();
            response
                .into_reader()
                .read_to_end(&mut body)
                .map_err(|e| LoadError::Fetch {
                    url: url.to_string(),
                    message: e.to_string(),
                })?;
            return Ok(body);
        }
        let rel = match url.strip_prefix("file://") {
            Some(rest) => {
                // file:///abs/path is accepted when it lies under the root
                let abs = Path::new(rest);
                match abs.strip_prefix(&self.data_root) {
                    Ok(inner) => inner.to_string_lossy().into_owned(),
                    Err(_) if abs.is_relative() => rest.to_string(),
                    Err(_) => return Err(LoadError::NotFound(url.to_string())),
                }
            }
            None if url.contains("://") => {
                return Err(LoadError::Fetch {
                    url: url.to_string(),
                    message: "unsupported scheme".into(),
                })
            }
            None => url.to_string(),
        };
        let path = self.resolve(url, &rel)?;
        std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => LoadError::NotFound(url.to_string()),
            _ => LoadError::Fetch {
                url: url.to_string(),
                message: e.to_string(),
            },
        })
    }

    pub fn load(&self, url: &str, format: DataFormat) -> Result<Table, LoadError> {
        let bytes = self.fetch(url)?;
        let ingest_err = |cause| LoadError::Ingest {
            url: url.to_string(),
            cause,
        };
        match format {
            DataFormat::Csv => ingest_csv(&bytes, CsvOptions::default()).map_err(ingest_err),
            DataFormat::Json => ingest_json(&bytes).map_err(ingest_err),
            DataFormat::Unsupported => Err(LoadError::UnsupportedFormat(url.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn root() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "x,y\n1,a\n2,b\n").unwrap();
        dir
    }

    #[test]
    fn bare_and_file_paths() {
        let dir = root();
        let l = Loader::new(dir.path());
        assert_eq!(l.load("a.csv", DataFormat::Csv).unwrap().nrows(), 2);
        let abs = format!("file://{}/a.csv", dir.path().display());
        assert_eq!(l.load(&abs, DataFormat::Csv).unwrap().nrows(), 2);
        assert!(matches!(l.load("missing.csv", DataFormat::Csv), Err(LoadError::NotFound(_))));
    }

    #[test]
    fn paths_stay_under_root() {
        let dir = root();
        let l = Loader::new(dir.path().join("sub"));
        assert!(matches!(l.load("../a.csv", DataFormat::Csv), Err(LoadError::NotFound(_))));
        assert!(matches!(l.load("/etc/passwd", DataFormat::Csv), Err(LoadError::NotFound(_))));
        assert!(matches!(l.load("file:///etc/passwd", DataFormat::Csv), Err(LoadError::NotFound(_))));
    }

    #[test]
    fn ingest_errors() {
        let dir = root();
        let l = Loader::new(dir.path());
        assert!(matches!(l.load("a.csv", DataFormat::Json), Err(LoadError::Ingest { .. })));
    }

    #[test]
    fn http_fixture_round_trip() {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let addr = server.server_addr().to_ip().unwrap();
        let handle = std::thread::spawn(move || {
            for _ in 0..2 {
                let req = server.recv().unwrap();
                let resp = if req.url() == "/d.json" {
                    tiny_http::Response::from_string(r#"[{"a":1},{"a":2}]"#)
                } else {
                    tiny_http::Response::from_string("no").with_status_code(404)
                };
                req.respond(resp).unwrap();
            }
        });
        let l = Loader::new(".");
        let t = l.load(&format!("http://{addr}/d.json"), DataFormat::Json).unwrap();
        assert_eq!(t.nrows(), 2);
        let err = l.load(&format!("http://{addr}/x.json"), DataFormat::Json);
        assert!(matches!(err, Err(LoadError::NotFound(_))));
        handle.join().unwrap();
    }
}
