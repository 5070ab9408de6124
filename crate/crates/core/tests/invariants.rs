use std::f64::consts::PI;

use fmfd_core::density_matrix::{dense_slater_dm, trace_distance_dense};
use fmfd_core::harness::{load_orbitals, save_orbitals};
use fmfd_core::hartree::{energy_parts, hartree_trajectory};
use fmfd_core::orbitals::{perturbed_family, random_family};
use fmfd_core::{
    fermi_sphere, free_propagate, modulated_family, sandwich_check, slater_dm, trace_distance, ComplexField, Grid,
    HartreeOptions, OrbitalSet, Sign,
};
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn plane_wave_free_evolution_is_a_phase() {
    let grid = Grid::new(8, 1.7).unwrap();
    let m = [2, -1, 3];
    let f = ComplexField::plane_wave(grid, m);
    let set = OrbitalSet::new(grid, vec![f.clone()], Sign::Plus).unwrap();
    let t = 0.37;
    let k2: f64 = m.iter().map(|&c| (2.0 * PI * c as f64 / grid.box_length()).powi(2)).sum();
    let phase = Complex64::from_polar(1.0, -k2 * t);
    let out = free_propagate(&set, t);
    let worst = out.orbitals()[0]
        .values()
        .iter()
        .zip(f.values())
        .map(|(a, b)| (a - b * phase).norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn fermi_sphere_energy_is_purely_kinetic() {
    let grid = Grid::new(12, 19f64.cbrt()).unwrap();
    let set = fermi_sphere(19, grid).unwrap();
    let e = energy_parts(&set).unwrap();
    // 1 + 6 + 12 modes with |m|^2 = 0, 1, 2
    let q2 = (2.0 * PI / grid.box_length()).powi(2);
    assert!((e.kinetic - 30.0 * q2).abs() < 1e-10 * e.kinetic, "{e:?}");
    assert!(e.interaction.abs() < 1e-12, "{e:?}");
}

#[test]
fn both_signs_conserve_energy_and_orthonormality() {
    for sign in [Sign::Plus, Sign::Minus] {
        let set = modulated_family(7, Grid::new(12, 7f64.cbrt()).unwrap(), 0.2).unwrap().with_sign(sign);
        let (_, recs) = hartree_trajectory(&set, 0.05, &HartreeOptions::new(1e-3), 10).unwrap();
        let e0 = recs[0].energy;
        for r in &recs {
            assert!((r.energy - e0).abs() <= 1e-6 * e0.abs(), "{sign:?} {r:?}");
            assert!(r.gram_deviation <= 1e-10, "{sign:?} {r:?}");
        }
    }
}

#[test]
fn checkpoint_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.fmfd");
    let set = random_family(5, Grid::new(6, 1.4).unwrap(), 2, 11).unwrap().with_sign(Sign::Minus);
    save_orbitals(&set, &path).unwrap();
    let back = load_orbitals(&path).unwrap();
    assert_eq!(back.sign(), Sign::Minus);
    assert_eq!(back.orbitals(), set.orbitals());
    std::fs::write(&path, b"FMFD").unwrap();
    assert!(load_orbitals(&path).is_err());
}

#[test]
fn orbital_rotation_leaves_the_density_matrix_unchanged() {
    let grid = Grid::new(6, 1.3).unwrap();
    let set = random_family(4, grid, 2, 3).unwrap();
    let u = fmfd_core::orbitals::random_unitary(4, 9).unwrap();
    let rotated = set.mix(&u).unwrap();
    let d = trace_distance(&slater_dm(&set).unwrap(), &slater_dm(&rotated).unwrap()).unwrap();
    assert!(d < 1e-10, "{d}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trace_distance_is_a_bounded_symmetric_metric(seed in 0u64..10_000, n_particles in 1usize..5, strength in 0.01f64..3.0) {
        let grid = Grid::new(6, 1.5).unwrap();
        let a = random_family(n_particles, grid, 2, seed).unwrap();
        let b = perturbed_family(&a, strength, 2, seed + 1).unwrap();
        let (da, db) = (slater_dm(&a).unwrap(), slater_dm(&b).unwrap());
        let ab = trace_distance(&da, &db).unwrap();
        let ba = trace_distance(&db, &da).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab >= 0.0 && ab <= 2.0 * n_particles as f64 + 1e-12);
        prop_assert!(sandwich_check(&a, &b).unwrap().ok);
    }
}

#[test]
fn dense_and_subspace_distances_agree_with_many_orbitals() {
    let grid = Grid::new(8, 2.0).unwrap();
    let a = random_family(8, grid, 2, 21).unwrap();
    let b = perturbed_family(&a, 0.5, 2, 22).unwrap();
    let low = trace_distance(&slater_dm(&a).unwrap(), &slater_dm(&b).unwrap()).unwrap();
    let dense = trace_distance_dense(&dense_slater_dm(&a).unwrap(), &dense_slater_dm(&b).unwrap()).unwrap();
    assert!((low - dense).abs() < 1e-9, "{low} vs {dense}");
}
