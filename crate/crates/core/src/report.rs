//! Publication-style tables: selected weights and correlations.

use crate::elasticnet::LinearModel;
use crate::stats::CorrelationReport;

pub const TABLE1_HEADER: &str = "feature,regression weight";
pub const TABLE2_HEADER: &str = "feature,corr. coeff.,p-value,reg. weight";

/// Three decimals, or scientific notation for small non-zero magnitudes.
pub fn format_value(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        if s == "-0.000" {
            "0.000".into()
        } else {
            s
        }
    }
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Non-zero weights, largest magnitude first.
pub fn table1_csv(model: &LinearModel) -> String {
    let mut out = format!("{TABLE1_HEADER}\n");
    for (name, w) in model.selected() {
        out.push_str(&format!("{},{}\n", quote(name), format_value(w)));
    }
    out
}

/// Every correlated feature with its BH-adjusted p-value and model weight,
/// smallest p-value first. Features the model does not use get weight 0.
pub fn table2_csv(correlations: &CorrelationReport, model: Option<&LinearModel>) -> String {
    let mut rows: Vec<_> = correlations.rows.iter().collect();
    rows.sort_by(|a, b| a.p_adj.total_cmp(&b.p_adj).then_with(|| a.feature.cmp(&b.feature)));
    let mut out = format!("{TABLE2_HEADER}\n");
    for row in rows {
        let weight = model.and_then(|m| m.weight_of(&row.feature)).unwrap_or(0.0);
        out.push_str(&format!(
            "{},{},{},{}\n",
            quote(&row.feature),
            format_value(row.r),
            format_value(row.p_adj),
            format_value(weight)
        ));
    }
    out
}
