//! Versioned text snapshots of a field profile.
//!
//! ```text
//! # mond-equilib v1
//! # key = value            (any number of metadata lines)
//! # columns: r rho M gN gM UN Ulam UM
//! 0.0000000000000000e0 ...
//! ```
//!
//! Values are written with 17 significant digits so a read-back is lossless.
//! An optional trailing table introduced by `# shells: r v_r L w` carries a
//! shell ensemble.

use std::fmt::Write as _;

use super::FieldProfile;
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &str = "# mond-equilib v1";
pub const SNAPSHOT_COLUMNS: [&str; 8] = ["r", "rho", "M", "gN", "gM", "UN", "Ulam", "UM"];
const SHELL_HEADER: &str = "# shells: r v_r L w";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Snapshot {
    pub meta: Vec<(String, String)>,
    /// One vector per entry of [`SNAPSHOT_COLUMNS`].
    pub columns: Vec<Vec<f64>>,
    /// Rows of `(r, v_r, L, w)` when a shell table is present.
    pub shells: Vec<[f64; 4]>,
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl Snapshot {
    pub fn from_profile(p: &FieldProfile) -> Self {
        let d = p.density();
        Self {
            meta: Vec::new(),
            columns: vec![
                d.grid().to_vec(),
                d.rho().to_vec(),
                d.mass_cum().to_vec(),
                p.gn.clone(),
                p.gm.clone(),
                p.un.clone(),
                p.ulam.clone(),
                p.um.clone(),
            ],
            shells: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let v = self
            .get(key)
            .ok_or_else(|| Error::Parse(format!("snapshot lacks `{key}`")))?;
        v.parse()
            .map_err(|_| Error::Parse(format!("snapshot key `{key}` is not a number: `{v}`")))
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        SNAPSHOT_COLUMNS
            .iter()
            .position(|c| *c == name)
            .and_then(|i| self.columns.get(i))
            .map(Vec::as_slice)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(SNAPSHOT_MAGIC);
        out.push('\n');
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(out, "# columns: {}", SNAPSHOT_COLUMNS.join(" "));
        let rows = self.columns.first().map_or(0, Vec::len);
        for i in 0..rows {
            let line: Vec<String> = self.columns.iter().map(|c| fmt_f64(c[i])).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        if !self.shells.is_empty() {
            out.push_str(SHELL_HEADER);
            out.push('\n');
            for s in &self.shells {
                let line: Vec<String> = s.iter().map(|&x| fmt_f64(x)).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == SNAPSHOT_MAGIC => {}
            _ => return Err(Error::Parse(format!("missing `{SNAPSHOT_MAGIC}` header line"))),
        }
        let mut snap = Snapshot {
            columns: vec![Vec::new(); SNAPSHOT_COLUMNS.len()],
            ..Snapshot::default()
        };
        let mut saw_columns = false;
        let mut in_shells = false;
        for (no, raw) in lines {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(cols) = rest.strip_prefix("columns:") {
                    let names: Vec<&str> = cols.split_whitespace().collect();
                    if names != SNAPSHOT_COLUMNS {
                        return Err(Error::Parse(format!(
                            "line {}: unexpected columns `{}`",
                            no + 1,
                            cols.trim()
                        )));
                    }
                    saw_columns = true;
                } else if line == SHELL_HEADER {
                    in_shells = true;
                } else if let Some((k, v)) = rest.split_once('=') {
                    snap.meta.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("line {}: bad number `{t}`", no + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if in_shells {
                let row: [f64; 4] = vals
                    .as_slice()
                    .try_into()
                    .map_err(|_| Error::Parse(format!("line {}: shell rows need 4 values", no + 1)))?;
                snap.shells.push(row);
            } else {
                if !saw_columns {
                    return Err(Error::Parse(format!(
                        "line {}: data before the columns header",
                        no + 1
                    )));
                }
                if vals.len() != SNAPSHOT_COLUMNS.len() {
                    return Err(Error::Parse(format!(
                        "line {}: expected {} values, found {}",
                        no + 1,
                        SNAPSHOT_COLUMNS.len(),
                        vals.len()
                    )));
                }
                for (c, v) in snap.columns.iter_mut().zip(vals) {
                    c.push(v);
                }
            }
        }
        if !saw_columns || snap.columns[0].is_empty() {
            return Err(Error::Parse("snapshot has no data rows".into()));
        }
        Ok(snap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpolation::InterpolationFunction;
    use crate::radial_field::{potentials, PotentialNormalization, RadialDensity};
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let d = RadialDensity::uniform_ball(1.0, 1.0, 20).unwrap();
        let p = potentials(
            &d,
            &InterpolationFunction::sqrt(),
            PotentialNormalization::default(),
        );
        let text = Snapshot::from_profile(&p)
            .with_meta("central_value", 0.5)
            .to_text();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# mond-equilib v1"));
        assert_eq!(lines.next(), Some("# central_value = 0.5"));
        assert_eq!(lines.next(), Some("# columns: r rho M gN gM UN Ulam UM"));
    }

    #[test]
    fn corrupted_input_is_rejected() {
        assert!(Snapshot::parse("hello\n").is_err());
        let bad = format!("{SNAPSHOT_MAGIC}\n# columns: r rho M gN gM UN Ulam UM\n1 2 3\n");
        assert!(matches!(Snapshot::parse(&bad), Err(Error::Parse(_))));
        let bad = format!("{SNAPSHOT_MAGIC}\n# columns: r rho M gN gM UN Ulam UM\n1 2 3 4 5 6 7 x\n");
        assert!(Snapshot::parse(&bad).is_err());
        let empty = format!("{SNAPSHOT_MAGIC}\n# columns: r rho M gN gM UN Ulam UM\n");
        assert!(Snapshot::parse(&empty).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(
            rows in prop::collection::vec(prop::array::uniform8(-1e300f64..1e300), 1..20),
            shells in prop::collection::vec(prop::array::uniform4(-1e10f64..1e10), 0..5),
        ) {
            let mut snap = Snapshot {
                columns: vec![Vec::new(); 8],
                ..Snapshot::default()
            };
            for r in &rows {
                for (c, v) in snap.columns.iter_mut().zip(r) {
                    c.push(*v);
                }
            }
            snap.shells = shells;
            snap.meta.push(("ansatz".into(), "fluid n=1 c=0.5".into()));
            let back = Snapshot::parse(&snap.to_text()).unwrap();
            prop_assert_eq!(back, snap);
        }
    }
}
