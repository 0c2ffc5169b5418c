//! Self-contained HTML rendering of attribution lists, plus the structured
//! text dump used for testing.

use std::path::Path;

use super::{Attribution, Method};
use crate::error::Result;

/// Color semantics per method.
#[derive(Debug, Clone)]
pub enum ColorScheme {
    /// Integrated-gradients reports: tokens pushing toward `hate_label` are
    /// shaded red, tokens pushing away from it green.
    IntegratedGradients { hate_label: String },
    /// Shapley reports: red supports the prediction, blue supports an
    /// alternative, with the numeric score above each token.
    Shap,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&#39;")
}

/// (red, green, blue) for a signed score under the scheme.
fn color(scheme: &ColorScheme, attribution: &Attribution, score: f64) -> (u8, u8, u8) {
    match scheme {
        ColorScheme::IntegratedGradients { hate_label } => {
            // positive scores support the predicted class; flip so red
            // always means "toward hate"
            let toward_hate = if attribution.predicted_label == *hate_label {
                score
            } else {
                -score
            };
            if toward_hate >= 0.0 {
                (220, 40, 40)
            } else {
                (30, 160, 60)
            }
        }
        ColorScheme::Shap => {
            if score >= 0.0 {
                (220, 40, 40)
            } else {
                (50, 90, 220)
            }
        }
    }
}

/// Render attributions as one self-contained HTML document (no external
/// assets). Shade intensity is `|score|` normalized per sample; an all-zero
/// sample renders unshaded.
pub fn render_report(attributions: &[Attribution], scheme: &ColorScheme, title: &str) -> String {
    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n");
    html.push_str(&format!("<title>{}</title>\n", escape(title)));
    html.push_str(
        "<style>\n\
         body { font-family: sans-serif; margin: 2em; }\n\
         .sample { margin-bottom: 1.6em; padding: 0.8em; border: 1px solid #ddd; }\n\
         .meta { color: #555; font-size: 0.85em; margin-bottom: 0.6em; }\n\
         .tokens { line-height: 2.6; }\n\
         .tok { padding: 0.15em 0.25em; margin: 0 0.1em; border-radius: 3px; \
         display: inline-block; text-align: center; }\n\
         .val { display: block; font-size: 0.6em; color: #333; }\n\
         </style>\n</head>\n<body>\n",
    );
    html.push_str(&format!("<h1>{}</h1>\n", escape(title)));

    for attr in attributions {
        let max_abs = attr.scores.iter().map(|s| s.abs()).fold(0.0f64, f64::max);
        let method = match attr.method {
            Method::IntegratedGradients => "IG",
            Method::Shap => "SHAP",
        };
        html.push_str("<div class=\"sample\">\n");
        html.push_str(&format!(
            "<div class=\"meta\">id: {} &middot; method: {method} &middot; predicted: {} \
             &middot; baseline: {} &middot; gap: {:.3e}</div>\n",
            escape(&attr.sample_id),
            escape(&attr.predicted_label),
            escape(&attr.baseline_desc),
            attr.gap,
        ));
        html.push_str("<div class=\"tokens\">");
        for (token, &score) in attr.tokens.iter().zip(&attr.scores) {
            let alpha = if max_abs > 0.0 {
                score.abs() / max_abs
            } else {
                0.0
            };
            let (r, g, b) = color(scheme, attr, score);
            let value_line = match attr.method {
                Method::Shap => format!("<span class=\"val\">{score:.3}</span>"),
                Method::IntegratedGradients => String::new(),
            };
            html.push_str(&format!(
                "<span class=\"tok\" style=\"background: rgba({r},{g},{b},{alpha:.3})\">\
                 {value_line}{}</span>",
                escape(token)
            ));
        }
        html.push_str("</div>\n</div>\n");
    }
    html.push_str("</body>\n</html>\n");
    html
}

/// `token<TAB>score` rows per sample, blank-line separated, with a `# id`
/// header per block.
pub fn write_attribution_tsv(attributions: &[Attribution], path: &Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for attr in attributions {
        writeln!(
            out,
            "# {}\tmethod={:?}\tpredicted={}\tgap={:.6e}",
            attr.sample_id, attr.method, attr.predicted_label, attr.gap
        )?;
        for (token, score) in attr.tokens.iter().zip(&attr.scores) {
            writeln!(out, "{token}\t{score:.12e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
