//! Objective fusion quality metrics for a (source A, source B, fused F) triple.
//!
//! * `pe`: Petrovic/Xydeas edge preservation Q^{AB/F}
//! * `mi`: fusion mutual information on 8-bit histograms, in bits
//! * `q`: Piella's index (the base, unweighted variant)
//! * `cv`: Cvejic's index

mod local;
mod mutual_info;
mod petrovic;
mod uiqi;

pub use local::{cvejic_q, piella_q, WINDOW};
pub use mutual_info::{entropy, mutual_information, mutual_information_metric};
pub use petrovic::{
    perfect_preservation, petrovic_qabf, petrovic_qabf_flagged, GAMMA_A, GAMMA_G, KAPPA_A, KAPPA_G, SIGMA_A, SIGMA_G,
};
pub use uiqi::uiqi_window;

use crate::error::Result;
use crate::fmt::round_sig;
use crate::image::Image;

/// Names of the images a report was computed from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportFiles {
    pub a: String,
    pub b: String,
    pub fused: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub pe: f64,
    pub mi: f64,
    pub q: f64,
    pub cv: f64,
    /// Set when neither source has edges, in which case `pe` is 0 by convention.
    pub pe_degenerate: bool,
    pub files: ReportFiles,
}

impl MetricReport {
    /// JSON object with keys `pe`, `mi`, `q`, `cv`, `files`; scores rounded to 10 significant digits.
    pub fn to_json(&self) -> String {
        let num = |x: f64| serde_json::Value::from(round_sig(x, 10));
        let value = serde_json::json!({
            "pe": num(self.pe),
            "mi": num(self.mi),
            "q": num(self.q),
            "cv": num(self.cv),
            "files": { "a": self.files.a, "b": self.files.b, "fused": self.files.fused },
        });
        serde_json::to_string_pretty(&value).expect("metric report serialises")
    }
}

/// All four metrics of `f` as a fusion of `a` and `b`.
pub fn evaluate_all(a: &Image, b: &Image, f: &Image) -> Result<MetricReport> {
    let (pe, pe_degenerate) = petrovic_qabf_flagged(a, b, f)?;
    Ok(MetricReport {
        pe,
        mi: mutual_information_metric(a, b, f)?,
        q: piella_q(a, b, f)?,
        cv: cvejic_q(a, b, f)?,
        pe_degenerate,
        files: ReportFiles::default(),
    })
}
