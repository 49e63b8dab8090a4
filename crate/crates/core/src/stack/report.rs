use super::Learner;

pub fn mae(y: &[f64], pred: &[f64]) -> f64 {
    y.iter().zip(pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64
}

pub fn rmse(y: &[f64], pred: &[f64]) -> f64 {
    (y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub learner: Learner,
    pub layer: usize,
    pub train_mae: f64,
    pub train_rmse: f64,
    pub test_mae: f64,
    pub test_rmse: f64,
}

/// Error table over learners and layers.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn get(&self, learner: Learner, layer: usize) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.learner == learner && r.layer == layer)
    }

    /// Layer with the lowest test MAE for `learner` (earliest on ties).
    pub fn best_layer(&self, learner: Learner) -> Option<usize> {
        self.rows
            .iter()
            .filter(|r| r.learner == learner)
            .fold(None::<&EvalRow>, |best, r| match best {
                Some(b) if b.test_mae <= r.test_mae => Some(b),
                _ => Some(r),
            })
            .map(|r| r.layer)
    }

    /// Aligned table; layer 0 (raw features) is shown as `-`.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<8}{:>6}{:>12}{:>12}{:>12}{:>12}\n",
            "learner", "layer", "train_mae", "train_rmse", "test_mae", "test_rmse"
        );
        let mut prev = None;
        for r in &self.rows {
            let name = if prev == Some(r.learner) { "" } else { r.learner.label() };
            prev = Some(r.learner);
            let layer = if r.layer == 0 { "-".to_string() } else { r.layer.to_string() };
            out.push_str(&format!(
                "{:<8}{:>6}{:>12.6}{:>12.6}{:>12.6}{:>12.6}\n",
                name, layer, r.train_mae, r.train_rmse, r.test_mae, r.test_rmse
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("learner,layer,train_mae,train_rmse,test_mae,test_rmse\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6}\n",
                r.learner.label(),
                r.layer,
                r.train_mae,
                r.train_rmse,
                r.test_mae,
                r.test_rmse
            ));
        }
        out
    }
}
