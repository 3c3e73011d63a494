use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use biquad::partsym::reconstruct;
use biquad::{BiquadraticForm, XSymmetricData};

/// A parsed input file: a form file, or x-symmetric parameters (recognized by a `"d"` key).
pub struct Input {
    pub form: BiquadraticForm,
    pub xsym: Option<XSymmetricData>,
}

pub fn load(path: &Path, transpose: bool) -> Result<Input> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {} as JSON", path.display()))?;
    let is_xsym = value.get("d").is_some();
    let (form, xsym) = if is_xsym {
        let data: XSymmetricData = serde_json::from_value(value)
            .with_context(|| format!("{} is not valid x-symmetric data", path.display()))?;
        (reconstruct(&data), Some(data))
    } else {
        let form = BiquadraticForm::from_json(&text).with_context(|| format!("{} is not a valid form file", path.display()))?;
        (form, None)
    };
    if transpose {
        Ok(Input {
            form: form.transpose_xy(),
            xsym: None,
        })
    } else {
        Ok(Input { form, xsym })
    }
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.write_all(b"\n")?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
