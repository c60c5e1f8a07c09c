//! The two built-in observation designs and their spectral decomposition.

use ddrm_refine::degradation::{svd, DegradationModel};

fn main() -> ddrm_refine::Result<()> {
    for n in [2, 3, 4] {
        let model = DegradationModel::shared(n)?;
        println!("shared, {n} sources: H =\n{}", model.matrix());
        println!("  singular values {:?}", model.singular_values());
        let d = svd(model.matrix())?;
        let err = (d.reconstruct() - model.matrix()).abs().max();
        println!("  reconstruction error {err:.2e}");
    }
    let model = DegradationModel::isolated(3)?;
    println!("isolated, 3 sources: singular values {:?}", model.singular_values());
    Ok(())
}
