//! Macro-F1, Krippendorff's alpha and the Mann–Whitney U test on small hand-made inputs.
//!
//!     cargo run --example metrics_tour

use mmprobe::data::Label::{Hateful as H, NonHateful as N};
use mmprobe::metrics::{krippendorff_alpha, macro_f1, mann_whitney_u, AnnotationMatrix};

fn main() -> anyhow::Result<()> {
    let gold = [H, H, H, N, N, N, N, H];
    let pred = [H, H, N, N, N, H, N, H];
    let out = macro_f1(&gold, &pred)?;
    println!("macro-F1 {:.4}, confusion {:?}", out.macro_f1, out.confusion);

    // raters are rows, items are columns; None marks a missing rating
    let ratings = AnnotationMatrix::from_codes(&[
        vec![Some("1"), Some("0"), Some("1"), Some("0"), None],
        vec![Some("1"), Some("0"), Some("0"), Some("0"), Some("1")],
        vec![Some("1"), None, Some("1"), Some("0"), Some("1")],
    ])?;
    println!("Krippendorff α {:.4}", krippendorff_alpha(&ratings)?);

    let a = [0.91, 0.88, 0.95, 0.90, 0.93];
    let b = [0.85, 0.87, 0.80, 0.89, 0.84, 0.90];
    let t = mann_whitney_u(&a, &b)?;
    println!("Mann–Whitney U_A {} U_B {} p {:.4} ({:?})", t.u_a, t.u_b, t.p_value, t.method);
    Ok(())
}
