//! Finite-difference checks of every layer, both losses and the training
//! graphs at toy size.
//!
//! cargo run --release --example gradcheck

use invsep::diagnostics::{full_suite, profile_gradients};

fn main() -> invsep::Result<()> {
    let checks = full_suite(1)?;
    for c in &checks {
        println!("{}", c.line());
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("{failed} of {} checks failed", checks.len());

    let pg = profile_gradients(2, 6)?;
    println!("selected positions {:?}", pg.selected);
    for (k, g) in pg.max_abs.iter().enumerate() {
        match g {
            Some(v) => println!("  profile {k}: max |grad| {v:.3e}"),
            None => println!("  profile {k}: no gradient"),
        }
    }
    Ok(())
}
