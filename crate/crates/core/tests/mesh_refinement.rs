use std::collections::HashMap;

use hyfem::Mesh;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Edge multiplicities rebuilt from the triangle list alone.
fn edge_counts(mesh: &Mesh) -> HashMap<(usize, usize), usize> {
    let mut edges = HashMap::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t.vertices[(k + 1) % 3], t.vertices[(k + 2) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    edges
}

fn on_square_boundary(mesh: &Mesh, a: usize, b: usize) -> bool {
    let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
    (0..2).any(|c| p[c] == q[c] && (p[c] == 0.0 || p[c] == 1.0))
}

/// Conforming triangulation of the unit square.
fn check_unit_square(mesh: &Mesh) -> Result<(), TestCaseError> {
    let edges = edge_counts(mesh);
    prop_assert_eq!(edges.len(), mesh.n_facets());
    for (&(a, b), &n) in &edges {
        prop_assert!(n == 2 || (n == 1 && on_square_boundary(mesh, a, b)), "edge {a}-{b} has {n} triangles");
    }
    prop_assert_eq!(mesh.n_vertices() as i64 - edges.len() as i64 + mesh.n_elements() as i64, 1);
    prop_assert_eq!(mesh.euler_characteristic(), 1);
    prop_assert!((mesh.total_area() - 1.0).abs() < 1e-13);
    for t in &mesh.triangles {
        let [a, b, c] = t.vertices.map(|v| mesh.vertices[v]);
        let signed = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
        prop_assert!(signed > 0.0);
        prop_assert!((signed - t.area).abs() < 1e-15);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bisection_keeps_mesh_conforming(seed in any::<u64>(), n in 1usize..4, fractions in prop::collection::vec(0.0f64..0.6, 1..6)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mesh = Mesh::unit_square(n);
        let shape = mesh.max_shape_ratio();
        for frac in fractions {
            let marked: Vec<usize> = (0..mesh.n_elements()).filter(|_| rng.gen::<f64>() < frac).collect();
            let fine = mesh.refine(&marked).unwrap();
            check_unit_square(&fine)?;
            prop_assert!(fine.n_elements() >= mesh.n_elements() + marked.len());
            // marked triangles are gone
            let mut kept: Vec<[usize; 3]> = fine.triangles.iter().map(|t| { let mut v = t.vertices; v.sort(); v }).collect();
            kept.sort();
            for &t in &marked {
                let mut v = mesh.triangles[t].vertices;
                v.sort();
                prop_assert!(kept.binary_search(&v).is_err());
            }
            // bisecting isosceles right triangles along the hypotenuse stays similar
            prop_assert!(fine.max_shape_ratio() <= shape * (1.0 + 1e-12));
            prop_assert!(fine.generation > mesh.generation || marked.is_empty());
            mesh = fine;
        }
    }

    #[test]
    fn dump_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = Mesh::unit_square(2);
        let marked: Vec<usize> = (0..mesh.n_elements()).filter(|_| rng.gen::<bool>()).collect();
        let mesh = mesh.refine(&marked).unwrap();
        let mut buf = Vec::new();
        mesh.write_dump(&mut buf).unwrap();
        let back = Mesh::read_dump(buf.as_slice()).unwrap();
        prop_assert_eq!(&back.vertices, &mesh.vertices);
        let tris = |m: &Mesh| m.triangles.iter().map(|t| t.vertices).collect::<Vec<_>>();
        prop_assert_eq!(tris(&back), tris(&mesh));
    }
}

#[test]
fn uniform_sweeps_double_elements() {
    let mesh = Mesh::unit_square(2);
    for sweeps in 0..5 {
        let fine = mesh.refine_uniform(sweeps);
        assert_eq!(fine.n_elements(), mesh.n_elements() << sweeps);
        check_unit_square(&fine).unwrap();
    }
}
