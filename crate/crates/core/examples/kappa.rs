//! Quadratic weighted kappa on a hand-made prediction set, with the pieces
//! that go into it.

use drgrade::grading::{decode_score, evaluate, weighted_kappa, Grade, Score};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth: Vec<Grade> = [0, 0, 0, 1, 1, 2, 2, 2, 3, 4, 4, 0].iter().map(|&g| Grade::new(g)).collect::<Result<_, _>>()?;
    let raw = [0.2, -0.4, 1.1, 0.9, 1.6, 2.2, 1.4, 2.6, 3.3, 3.7, 5.2, 0.45];
    let scores: Vec<Score> = raw.iter().map(|&s| Score::new(s)).collect::<Result<_, _>>()?;

    for (s, t) in scores.iter().zip(&truth) {
        println!("score {:>5.2} -> grade {}  (truth {t})", s.value(), decode_score(*s));
    }

    let report = evaluate(&truth, &scores)?;
    println!("\nconfusion (rows = truth, cols = predicted)");
    for row in report.confusion.rows() {
        println!("  {row:?}");
    }
    println!("qwk {:.4}  accuracy {:.3}  mse {:.4}", report.qwk(), report.accuracy, report.mse);
    println!("numerator {:.4}  denominator {:.4}", report.kappa.numerator, report.kappa.denominator);

    // Linear weights penalize distant mistakes less.
    let linear = weighted_kappa(&report.confusion, 1.0)?;
    println!("linear-weighted kappa {:.4}", linear.qwk);
    Ok(())
}
