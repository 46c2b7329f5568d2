// Temporary measurement: p=9 Legendre truncation floor of Ishigami.
use dpce_core::*;
use nalgebra::DVector;

#[test]
#[ignore]
fn measure_floor() {
    let spec = BasisSpec::new(Family::Legendre, 3, 9).unwrap();
    let pool = sample_standard(&spec, 4000, RngStream::new(123, 0)).unwrap();
    let psi = spec.assemble_unweighted(&pool.points).unwrap();
    let u = DVector::from_fn(4000, |i, _| ishigami(&pool.point(i)).unwrap());
    let c = lsa(&psi, &u).unwrap();

    let vpool = sample_standard(&spec, 20000, RngStream::new(123, 1)).unwrap();
    let psi_v = spec.assemble_unweighted(&vpool.points).unwrap();
    let u_v = DVector::from_fn(20000, |i, _| ishigami(&vpool.point(i)).unwrap());
    let e = relative_validation_error(&c, &psi_v, &u_v).unwrap();
    let mut mags: Vec<f64> = c.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    println!("full-LS (k=220) floor: e_rel = {e:.4e}");
    println!(
        "top-24 |c|: {:?}",
        &mags[..24]
            .iter()
            .map(|v| format!("{v:.2e}"))
            .collect::<Vec<_>>()
    );
}
