//! Model file format.
//!
//! ```text
//! psi version=1
//! classifier kind=logistic D=2 H=0
//! <one weight per line>
//! count pi0=0.01 pi1=0.9
//! noise K=1
//! gamma=1 mu=0 sigma=1
//! ```
//!
//! The count and noise blocks are optional so that baseline classifiers
//! share the format.

use std::path::Path;
use std::str::FromStr;

use crate::classifier::ClassifierParams;
use crate::error::{Error, Result};
use crate::learning::ModelParams;
use crate::observation::{CountParams, NoiseParams};

pub const FORMAT_VERSION: u32 = 1;

type Fields<'a> = Vec<(&'a str, &'a str)>;

/// Splits `tag k=v k=v ...`, checking the leading tag.
pub(crate) fn key_values<'a>(line: &'a str, tag: &str) -> std::result::Result<Fields<'a>, String> {
    let mut parts = line.split_whitespace();
    match parts.next() {
        Some(t) if t == tag => {}
        other => return Err(format!("expected `{tag}` line, found `{}`", other.unwrap_or(""))),
    }
    parts.map(split_pair).collect()
}

/// Splits `k=v k=v ...` with no leading tag.
pub(crate) fn bare_key_values(line: &str) -> std::result::Result<Fields<'_>, String> {
    line.split_whitespace().map(split_pair).collect()
}

fn split_pair(tok: &str) -> std::result::Result<(&str, &str), String> {
    tok.split_once('=').ok_or_else(|| format!("expected key=value, found `{tok}`"))
}

pub(crate) fn field<'a>(fields: &Fields<'a>, key: &str) -> std::result::Result<&'a str, String> {
    fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| format!("missing field `{key}`"))
}

pub(crate) fn parse_field<T: FromStr>(fields: &Fields<'_>, key: &str) -> std::result::Result<T, String> {
    let v = field(fields, key)?;
    v.parse().map_err(|_| format!("bad value `{v}` for `{key}`"))
}

/// Contents of a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub classifier: ClassifierParams,
    pub count: Option<CountParams>,
    pub noise: Option<NoiseParams>,
}

impl ModelFile {
    pub fn classifier_only(classifier: ClassifierParams) -> Self {
        Self {
            classifier,
            count: None,
            noise: None,
        }
    }

    /// Full parameters, if both observation blocks are present.
    pub fn into_params(self) -> Option<ModelParams> {
        match (self.count, self.noise) {
            (Some(count), Some(noise)) => Some(ModelParams::new(self.classifier, count, noise)),
            _ => None,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("psi version={FORMAT_VERSION}\n");
        out.push_str(&self.classifier.to_text());
        if let Some(c) = &self.count {
            out.push_str(&c.to_text());
        }
        if let Some(n) = &self.noise {
            out.push_str(&n.to_text());
        }
        out
    }

    /// Parses a model file. The classifier prior variance is not stored and
    /// is set to `prior_variance`.
    pub fn parse(text: &str, file: &Path, prior_variance: f64) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            file: file.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (ln, header) = lines.next().ok_or_else(|| err(1, "empty model file".into()))?;
        let fields = key_values(header, "psi").map_err(|m| err(ln, m))?;
        let version: u32 = parse_field(&fields, "version").map_err(|m| err(ln, m))?;
        if version != FORMAT_VERSION {
            return Err(err(ln, format!("unsupported model version {version}")));
        }

        let (ln, header) = lines
            .next()
            .ok_or_else(|| err(ln, "missing classifier block".into()))?;
        let classifier =
            ClassifierParams::parse_block(header, &mut lines, prior_variance).map_err(|m| err(ln, m))?;

        let mut count = None;
        let mut noise = None;
        while let Some((ln, line)) = lines.next() {
            match line.split_whitespace().next() {
                Some("count") if count.is_none() => {
                    count = Some(CountParams::parse_line(line).map_err(|m| err(ln, m))?);
                }
                Some("noise") if noise.is_none() => {
                    noise = Some(NoiseParams::parse_block(line, &mut lines).map_err(|m| err(ln, m))?);
                }
                _ => return Err(err(ln, format!("unexpected line `{line}`"))),
            }
        }
        Ok(Self {
            classifier,
            count,
            noise,
        })
    }

    pub fn read(path: impl AsRef<Path>, prior_variance: f64) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, prior_variance)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

impl From<&ModelParams> for ModelFile {
    fn from(p: &ModelParams) -> Self {
        Self {
            classifier: p.classifier.clone(),
            count: Some(p.count.clone()),
            noise: Some(p.noise.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ClassifierKind;

    fn sample() -> ModelParams {
        let classifier =
            ClassifierParams::from_weights(ClassifierKind::Logistic, 2, vec![0.5, -1.25, 0.1], 1.0).unwrap();
        let count = CountParams::bernoulli(0.02, 0.85).unwrap();
        let noise = NoiseParams::mixture(&[0.3, 0.7], &[-0.5, 0.25], &[0.4, 1.5]).unwrap();
        ModelParams::new(classifier, count, noise)
    }

    #[test]
    fn round_trip_full_model() {
        let p = sample();
        let text = ModelFile::from(&p).to_text();
        assert!(text.starts_with("psi version=1\n"));
        let back = ModelFile::parse(&text, Path::new("m.psi"), 1.0).unwrap();
        let q = back.into_params().unwrap();
        assert_eq!(q.classifier, p.classifier);
        assert!((q.count.pi(1) - 0.85).abs() < 1e-15);
        for (a, b) in q.pack().iter().zip(p.pack()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn classifier_only_round_trip() {
        let p = sample();
        let m = ModelFile::classifier_only(p.classifier.clone());
        let back = ModelFile::parse(&m.to_text(), Path::new("m"), 1.0).unwrap();
        assert_eq!(back, m);
        assert!(back.into_params().is_none());
    }

    #[test]
    fn rejects_bad_version_and_trailing_garbage() {
        let e = ModelFile::parse("psi version=2\n", Path::new("x"), 1.0).unwrap_err();
        assert!(e.to_string().contains("x:1"), "{e}");
        let mut text = ModelFile::from(&sample()).to_text();
        text.push_str("bogus\n");
        let e = ModelFile::parse(&text, Path::new("x"), 1.0).unwrap_err();
        assert!(e.to_string().contains("unexpected"), "{e}");
    }

    #[test]
    fn truncated_classifier_block_is_reported() {
        let e = ModelFile::parse("psi version=1\nclassifier kind=logistic D=2 H=0\n1\n", Path::new("x"), 1.0)
            .unwrap_err();
        assert!(e.to_string().contains("weights"), "{e}");
    }
}
