use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Label carried by every reported joint-quality value.
pub const JQM_LABEL: &str = "jqm_variant";

/// One image's results. `None` marks an undefined value (for example the
/// correlation of a flat image); those are left out of aggregates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub name: String,
    pub protocol: String,
    pub scc: Option<f64>,
    pub ergas: Option<f64>,
    pub psnr: Option<f64>,
    pub scc_f: Option<f64>,
    pub qnr: Option<f64>,
    #[serde(rename = "jqm_variant")]
    pub jqm: Option<f64>,
    /// Block-matching misalignment of the raw MS against the downscaled PAN.
    pub input_misalignment_px: Option<f64>,
    /// The same for the MS image consumed by the sharpening stage.
    pub residual_misalignment_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl ImageMetrics {
    fn fields(&self) -> [(&'static str, Option<f64>); 8] {
        [
            ("scc", self.scc),
            ("ergas", self.ergas),
            ("psnr", self.psnr),
            ("scc_f", self.scc_f),
            ("qnr", self.qnr),
            (JQM_LABEL, self.jqm),
            ("input_misalignment_px", self.input_misalignment_px),
            ("residual_misalignment_px", self.residual_misalignment_px),
        ]
    }
}

/// Mean of every metric over the images where it is defined.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub protocol: String,
    pub images: usize,
    pub scc: Option<f64>,
    pub ergas: Option<f64>,
    pub psnr: Option<f64>,
    pub scc_f: Option<f64>,
    pub qnr: Option<f64>,
    #[serde(rename = "jqm_variant")]
    pub jqm: Option<f64>,
    pub input_misalignment_px: Option<f64>,
    pub residual_misalignment_px: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.flatten() {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

pub fn aggregate(protocol: &str, images: &[ImageMetrics]) -> Aggregate {
    let col = |f: fn(&ImageMetrics) -> Option<f64>| mean_of(images.iter().map(f));
    Aggregate {
        protocol: protocol.to_string(),
        images: images.len(),
        scc: col(|m| m.scc),
        ergas: col(|m| m.ergas),
        psnr: col(|m| m.psnr),
        scc_f: col(|m| m.scc_f),
        qnr: col(|m| m.qnr),
        jqm: col(|m| m.jqm),
        input_misalignment_px: col(|m| m.input_misalignment_px),
        residual_misalignment_px: col(|m| m.residual_misalignment_px),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub images: Vec<ImageMetrics>,
    pub aggregates: Vec<Aggregate>,
}

impl MetricsReport {
    /// One JSON object per image followed by one per protocol aggregate.
    /// Infinite PSNR values are written as the capped value.
    pub fn to_jsonl(&self) -> serde_json::Result<String> {
        let mut out = String::new();
        for m in &self.images {
            let mut m = m.clone();
            m.psnr = m.psnr.map(super::psnr_capped);
            let mut v = serde_json::to_value(&m)?;
            v["kind"] = "image".into();
            out.push_str(&serde_json::to_string(&v)?);
            out.push('\n');
        }
        for a in &self.aggregates {
            let mut a = a.clone();
            a.psnr = a.psnr.map(super::psnr_capped);
            let mut v = serde_json::to_value(&a)?;
            v["kind"] = "aggregate".into();
            out.push_str(&serde_json::to_string(&v)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,protocol");
        for (k, _) in ImageMetrics::default().fields() {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        for m in &self.images {
            let _ = write!(out, "{},{}", m.name, m.protocol);
            for (k, v) in m.fields() {
                let v = if k == "psnr" { v.map(super::psnr_capped) } else { v };
                match v {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregates_skip_undefined_values() {
        let a = ImageMetrics {
            scc: Some(0.5),
            psnr: Some(30.0),
            ..Default::default()
        };
        let b = ImageMetrics {
            scc: None,
            psnr: Some(40.0),
            ..Default::default()
        };
        let agg = aggregate("misaligned", &[a, b]);
        assert_eq!(agg.scc, Some(0.5));
        assert_eq!(agg.psnr, Some(35.0));
        assert_eq!(agg.qnr, None);
    }

    #[test]
    fn jsonl_caps_psnr_and_labels_jqm() {
        let report = MetricsReport {
            images: vec![ImageMetrics {
                name: "x".into(),
                psnr: Some(f64::INFINITY),
                jqm: Some(0.9),
                ..Default::default()
            }],
            aggregates: vec![],
        };
        let text = report.to_jsonl().unwrap();
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(v["psnr"], 99.0);
        assert_eq!(v[JQM_LABEL], 0.9);
        assert_eq!(v["kind"], "image");
    }
}
