use ldg::field::{
    el_residual, energy, hedgehog_bc, lp_gradient_norm, theta, Domain, FieldQ, GridSpec, PhiCutoff,
    Region,
};
use ldg::tensor::{MaterialParams, QTensor};

fn unit() -> MaterialParams {
    MaterialParams::new(1.0, 1.0, 1.0).unwrap()
}

const A: [f64; 5] = [0.1, -0.2, 0.05, 0.3, -0.1];
const B: [[f64; 5]; 3] = [
    [0.4, 0.0, -0.3, 0.1, 0.2],
    [-0.1, 0.5, 0.0, 0.2, 0.0],
    [0.0, 0.1, 0.2, -0.3, 0.6],
];

fn affine(dims: [usize; 3], h: f64) -> FieldQ {
    let grid = GridSpec::centered(&dims, h).unwrap();
    let values = (0..grid.len())
        .map(|i| {
            let x = grid.position(i);
            QTensor::new(std::array::from_fn(|k| {
                A[k] + (0..3).map(|a| x[a] * B[a][k]).sum::<f64>()
            }))
        })
        .collect();
    let mask = (0..grid.len()).map(|i| grid.is_edge(i)).collect();
    FieldQ::from_parts(grid, values, mask, 0.2, unit()).unwrap()
}

fn b_sq(a: usize) -> f64 {
    B[a].iter().map(|v| v * v).sum()
}

#[test]
fn affine_dirichlet_energy_counts_edges_exactly() {
    let dims = [7, 9, 11];
    let h = 0.1;
    let f = affine(dims, h);
    let mut expected = 0.0;
    for a in 0..3 {
        let edges = (dims[a] - 1)
            * (0..3)
                .filter(|&b| b != a)
                .map(|b| dims[b])
                .product::<usize>();
        expected += 0.5 * b_sq(a) * edges as f64 * h.powi(3);
    }
    let got = energy(&f, &Region::All).unwrap().dirichlet;
    assert!((got / expected - 1.0).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn affine_lp_norms_on_interior_box() {
    let f = affine([12, 12, 12], 0.1);
    let k = Region::Box {
        lo: [-0.3; 3],
        hi: [0.3; 3],
    };
    let nodes = k.nodes(&f.grid).unwrap().len();
    let vol = nodes as f64 * f.grid.cell_volume();
    let g = (b_sq(0) + b_sq(1) + b_sq(2)).sqrt();
    for p in [1.0, 1.2, 1.5, 2.0, 4.0] {
        let got = lp_gradient_norm(&f, p, &k).unwrap();
        let want = g * vol.powf(1.0 / p);
        assert!((got / want - 1.0).abs() < 1e-12, "p = {p}");
    }
    assert!(lp_gradient_norm(&f, 0.5, &k).is_err());
}

#[test]
fn trilinear_sampling_reproduces_affine_fields() {
    let f = affine([8, 8, 8], 0.125);
    for x in [[0.0, 0.0, 0.0], [0.123, -0.31, 0.05], [-0.4, 0.4, -0.2]] {
        let q = f.sample(x).unwrap();
        for k in 0..5 {
            let want = A[k] + (0..3).map(|a| x[a] * B[a][k]).sum::<f64>();
            assert!((q.0[k] - want).abs() < 1e-12);
        }
    }
    assert!(f.sample([5.0, 0.0, 0.0]).is_none());
}

#[test]
fn vacuum_field_has_zero_energy_residual_and_theta() {
    let mp = unit();
    let grid = GridSpec::centered(&[12, 12, 12], 0.1).unwrap();
    let q = QTensor::uniaxial([0.3, -0.4, 0.8], mp.s_star);
    let f = FieldQ::constant(grid, q, 0.1, mp).unwrap();
    assert!(energy(&f, &Region::All).unwrap().total.abs() < 1e-12);
    assert!(el_residual(&f).sup < 1e-13);
    assert!(
        theta(&f, [0.0; 3], 0.1, &PhiCutoff::default())
            .unwrap()
            .abs()
            < 1e-12
    );
    assert!(theta(&f, [0.0; 3], 1.0, &PhiCutoff::default()).is_err());
}

#[test]
fn hedgehog_boundary_is_radial_vacuum() {
    let mp = unit();
    let grid = GridSpec::centered(&[10, 10, 10], 0.1).unwrap();
    let f = hedgehog_bc(&grid, &mp, 0.2, [0.0; 3], Domain::Box).unwrap();
    for i in (0..grid.len()).filter(|&i| f.boundary_mask[i]) {
        let x = grid.position(i);
        let want = QTensor::uniaxial(x, mp.s_star);
        assert!((f.values[i] - want).norm() < 1e-12);
    }
    assert_eq!(f.boundary_mask.iter().filter(|&&m| m).count(), 1000 - 512);
}
