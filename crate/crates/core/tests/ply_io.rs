use nalgebra::{Quaternion, Vector3};
use proptest::prelude::*;
use splatwalk::gauss::{parse_splat_ply, save_splat_ply, load_splat_ply, write_splat_ply, Gaussian3D, GaussianSet};
use splatwalk::Error;

fn gaussian() -> impl Strategy<Value = Gaussian3D> {
    (
        prop::array::uniform3(-100.0f64..100.0),
        prop::array::uniform3(1e-4f64..10.0),
        prop::array::uniform4(-1.0f64..1.0),
        0.001f64..0.999,
        prop::array::uniform3(0.0f64..1.0),
    )
        .prop_filter_map("zero quaternion", |(c, s, q, o, col)| {
            Gaussian3D::new(c.into(), s.into(), Quaternion::new(q[0], q[1], q[2], q[3]), o, col.into()).ok()
        })
}

fn bytes(set: &GaussianSet) -> Vec<u8> {
    let mut out = Vec::new();
    write_splat_ply(set, &mut out).unwrap();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn save_load_round_trip(v in prop::collection::vec(gaussian(), 1..40)) {
        let set = GaussianSet::new(v);
        let back = parse_splat_ply(&bytes(&set)).unwrap();
        prop_assert_eq!(back.len(), set.len());
        for (a, b) in set.iter().zip(back.iter()) {
            prop_assert!((a.center() - b.center()).amax() <= 1e-6 * (1.0 + a.center().amax()));
            prop_assert!(((a.scale() - b.scale()).component_div(&a.scale())).amax() <= 1e-6);
            prop_assert!((a.rotation().coords - b.rotation().coords).amax() <= 1e-6);
            prop_assert!((a.opacity() - b.opacity()).abs() <= 1e-6);
            prop_assert!((a.color() - b.color()).amax() <= 1e-6);
        }
        prop_assert_eq!(bytes(&back), bytes(&parse_splat_ply(&bytes(&back)).unwrap()));
    }

    #[test]
    fn mutated_files_give_typed_errors(
        v in prop::collection::vec(gaussian(), 1..5),
        flips in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..8),
        cut in any::<prop::sample::Index>(),
        truncate in any::<bool>(),
    ) {
        let mut b = bytes(&GaussianSet::new(v));
        for (i, byte) in flips {
            let i = i.index(b.len());
            b[i] = byte;
        }
        if truncate {
            b.truncate(cut.index(b.len()));
        }
        match parse_splat_ply(&b) {
            Ok(set) => prop_assert!(set.iter().all(|g| g.opacity() > 0.0 && g.opacity() < 1.0)),
            Err(Error::Format(_) | Error::Data { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected error kind {e:?}"),
        }
    }

    #[test]
    fn arbitrary_bytes_never_panic(b in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = parse_splat_ply(&b);
        let mut h = b"ply\nformat binary_little_endian 1.0\n".to_vec();
        h.extend_from_slice(&b);
        let _ = parse_splat_ply(&h);
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.ply");
    let set: GaussianSet = (0..10)
        .map(|i| Gaussian3D::isotropic(Vector3::new(i as f64, 0.5, -1.0), 0.1, 0.4, Vector3::new(0.2, 0.3, 0.4)).unwrap())
        .collect();
    save_splat_ply(&set, &path).unwrap();
    let back = load_splat_ply(&path).unwrap();
    assert_eq!(back.len(), 10);
    assert!(matches!(load_splat_ply(dir.path().join("missing.ply")), Err(Error::Io { .. })));
}
