//! Re-slicing a trajectory CSV into the series each figure plots.

use thiserror::Error;

/// Figure id and the trajectory columns it plots (time first).
pub const FIGURES: &[(&str, &[&str])] = &[
    ("fig3", &["t", "e1", "e2", "e3"]),
    ("fig4", &["t", "w1", "w2", "w3"]),
    ("fig5", &["t", "wi1", "wi2", "wi3"]),
    ("fig6", &["t", "e1", "e2", "e3"]),
    ("fig7", &["t", "w1", "w2", "w3"]),
    ("fig8", &["t", "wi1", "wi2", "wi3"]),
    ("fig9", &["t", "e1", "e2", "e3"]),
    ("fig10", &["t", "w1", "w2", "w3"]),
    ("fig11", &["t", "wi1", "wi2", "wi3"]),
    ("fig12", &["t", "e1", "e2", "e3"]),
    ("fig13", &["t", "w1", "w2", "w3", "ad_norm"]),
    ("fig14", &["t", "wi1", "wi2", "wi3"]),
    ("fig15", &["t", "e1", "e2", "e3"]),
    ("fig16", &["t", "w1", "w2", "w3", "ad_norm"]),
    ("fig17", &["t", "wi1", "wi2", "wi3"]),
    ("fig18", &["t", "e1", "e2", "e3"]),
    ("fig19", &["t", "e1", "e2", "e3"]),
    ("fig20", &["t", "e1", "e2", "e3"]),
    ("fig21", &["t", "e1", "e2", "e3"]),
    ("fig22", &["t", "qcqr1", "qcqr2", "qcqr3"]),
    ("fig24", &["t", "e1", "e2", "e3"]),
    ("fig25", &["t", "e1", "e2", "e3"]),
];

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("unknown figure `{0}`; valid ids: {}", figure_ids().join(", "))]
    UnknownFigure(String),
    #[error("input is empty")]
    Empty,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },
}

pub fn figure_ids() -> Vec<&'static str> {
    FIGURES.iter().map(|(id, _)| *id).collect()
}

pub fn figure_columns(id: &str) -> Option<&'static [&'static str]> {
    FIGURES.iter().find(|(f, _)| *f == id).map(|(_, c)| *c)
}

/// Select the figure's columns from `csv`. Fields are copied verbatim.
pub fn extract(csv: &str, figure: &str) -> Result<String, PlotError> {
    let cols = figure_columns(figure).ok_or_else(|| PlotError::UnknownFigure(figure.into()))?;
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().ok_or(PlotError::Empty)?.split(',').collect();
    let idx: Vec<usize> = cols
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h.trim() == *c)
                .ok_or_else(|| PlotError::MissingColumn(c.to_string()))
        })
        .collect::<Result<_, _>>()?;

    let mut out = cols.join(",");
    out.push('\n');
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(PlotError::Ragged {
                line: n + 2,
                expected: header.len(),
                found: fields.len(),
            });
        }
        let picked: Vec<&str> = idx.iter().map(|i| fields[*i]).collect();
        out.push_str(&picked.join(","));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_input_gives_header_only_output() {
        let out = extract("t,e1,e2,e3,w1\n", "fig3").unwrap();
        assert_eq!(out, "t,e1,e2,e3\n");
    }

    #[test]
    fn fields_are_copied_verbatim() {
        let csv = "t,qcqr1,qcqr2,qcqr3\n1.00000000e-2,NaN,-3.25000000e0,7e1\n";
        let out = extract(csv, "fig22").unwrap();
        assert_eq!(
            out.lines().nth(1),
            Some("1.00000000e-2,NaN,-3.25000000e0,7e1")
        );
    }

    #[test]
    fn unknown_figure_lists_ids() {
        let e = extract("t\n", "fig23").unwrap_err();
        assert!(e.to_string().contains("fig22"));
    }
}
