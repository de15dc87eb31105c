use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::BenchError;

/// One accuracy in long format. Optional columns stay empty when they do
/// not apply, such as adaptation settings for unadapted models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub figure_id: String,
    pub model_id: String,
    pub noise_source: String,
    pub train_snr_db: Option<i32>,
    pub test_snr_db: Option<i32>,
    pub shots: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FigureTable {
    pub rows: Vec<FigureRow>,
}

impl FigureTable {
    pub const HEADER: &'static str =
        "figure_id,model_id,noise_source,train_snr_db,test_snr_db,shots,epochs,seed,accuracy";

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), BenchError> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let mut text = String::new();
        text.push_str(Self::HEADER);
        text.push('\n');
        for r in &self.rows {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{:.6}\n",
                r.figure_id,
                r.model_id,
                r.noise_source,
                opt(r.train_snr_db.map(|v| v.to_string())),
                opt(r.test_snr_db.map(|v| v.to_string())),
                opt(r.shots.map(|v| v.to_string())),
                opt(r.epochs.map(|v| v.to_string())),
                r.seed,
                r.accuracy
            ));
        }
        out.write_all(text.as_bytes()).map_err(BenchError::io("<figure table>"))
    }

    /// Parses a table, rejecting unknown or missing columns.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, BenchError> {
        let mut reader = csv::Reader::from_reader(input);
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != Self::HEADER {
            return Err(BenchError::Usage(format!("unexpected figure table header {}", header.join(","))));
        }
        let rows = reader.deserialize().collect::<Result<Vec<FigureRow>, _>>()?;
        for r in &rows {
            if !(0.0..=1.0).contains(&r.accuracy) {
                return Err(BenchError::Usage(format!("accuracy {} out of range", r.accuracy)));
            }
        }
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_header_and_formatting() {
        let t = FigureTable {
            rows: vec![
                FigureRow {
                    figure_id: "fig5".into(),
                    model_id: "baseline".into(),
                    noise_source: "car_horn".into(),
                    train_snr_db: Some(-3),
                    test_snr_db: Some(21),
                    shots: Some(1),
                    epochs: Some(1),
                    seed: 4,
                    accuracy: 2.0 / 3.0,
                },
                FigureRow {
                    figure_id: "fig3".into(),
                    model_id: "noise_aware_20".into(),
                    noise_source: "pink".into(),
                    train_snr_db: None,
                    test_snr_db: Some(0),
                    shots: None,
                    epochs: None,
                    seed: 0,
                    accuracy: 1.0,
                },
            ],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "figure_id,model_id,noise_source,train_snr_db,test_snr_db,shots,epochs,seed,accuracy\n\
             fig5,baseline,car_horn,-3,21,1,1,4,0.666667\n\
             fig3,noise_aware_20,pink,,0,,,0,1.000000\n"
        );
        let back = FigureTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows.len(), 2);
        assert_eq!(back.rows[1].shots, None);
        assert!((back.rows[0].accuracy - 0.666667).abs() < 1e-12);
    }

    #[test]
    fn extra_columns_are_rejected() {
        let text = format!("{},extra\nfig3,m,pink,,0,,,0,0.5,1\n", FigureTable::HEADER);
        assert!(FigureTable::read_csv(text.as_bytes()).is_err());
    }
}
