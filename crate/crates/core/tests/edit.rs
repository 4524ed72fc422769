mod common;

use common::{front_camera, random_scene, rng, SceneSpec};
use proptest::prelude::*;
use semsplat::edit::{delete, insert, recolor, select_by_label, translate};
use semsplat::fixture::{self, FixtureConfig};
use semsplat::model::{sh, GaussianSoA};
use semsplat::render;
use semsplat::Scene;

fn flat_scene(seed: u64, n: usize) -> Scene<f32> {
    random_scene(
        &SceneSpec {
            gaussians: n,
            sh_degree: 0,
            width: 32,
            height: 32,
            ..SceneSpec::default()
        },
        &mut rng(seed),
    )
}

fn max_diff(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() as f64).fold(0.0, f64::max)
}

/// Own color of Gaussian `i` in a degree-0 scene.
fn own_rgb(scene: &Scene<f32>, i: usize) -> [f32; 3] {
    sh::sh_to_color(scene.gaussians.sh_of(i), [0.0, 0.0, 1.0], 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn recolor_to_own_color_is_invisible(seed in any::<u64>(), n in 1usize..40) {
        let scene = flat_scene(seed, n);
        let cam = front_camera(32, 32);
        let before = render(&scene, &cam);
        let mut edited = scene.clone();
        for i in 0..n {
            recolor(&mut edited, &[i], own_rgb(&scene, i)).unwrap();
        }
        let after = render(&edited, &cam);
        prop_assert!(max_diff(&before.color, &after.color) < 1e-6);
    }

    #[test]
    fn translate_there_and_back_restores_render(
        seed in any::<u64>(),
        n in 1usize..40,
        t in prop::array::uniform3(-0.5f32..0.5),
        pick in prop::collection::vec(any::<prop::sample::Index>(), 1..10),
    ) {
        let scene = flat_scene(seed, n);
        let cam = front_camera(32, 32);
        let ids: Vec<usize> = pick.iter().map(|i| i.index(n)).collect();
        let mut edited = scene.clone();
        translate(&mut edited, &ids, t).unwrap();
        translate(&mut edited, &ids, t.map(|v| -v)).unwrap();
        let (a, b) = (render(&scene, &cam), render(&edited, &cam));
        prop_assert!(max_diff(&a.color, &b.color) < 1e-6);
        prop_assert!(max_diff(&a.feature, &b.feature) < 1e-6);
    }

    #[test]
    fn delete_all_renders_background(seed in any::<u64>(), n in 0usize..40) {
        let mut scene = flat_scene(seed, n);
        let all: Vec<usize> = (0..n).collect();
        delete(&mut scene, &all).unwrap();
        prop_assert!(scene.is_empty());
        let out = render(&scene, &front_camera(32, 32));
        for p in 0..32 * 32 {
            prop_assert_eq!(&out.color[3 * p..3 * p + 3], &scene.background[..]);
            prop_assert_eq!(out.alpha[p], 0.0);
        }
    }

    #[test]
    fn selections_partition_the_scene(seed in any::<u64>(), n in 0usize..40) {
        let scene = flat_scene(seed, n);
        let mut all: Vec<usize> = std::iter::once("undetected")
            .chain(scene.dictionary.labels().iter().map(String::as_str))
            .flat_map(|l| select_by_label(&scene, l).unwrap())
            .collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn deleting_one_label_keeps_the_rest_bit_exact() {
    let mut scene = fixture::ground_truth_scene(&FixtureConfig::default());
    let apple = select_by_label(&scene, "apple").unwrap();
    assert!(!apple.is_empty());
    let kept: GaussianSoA<f32> = {
        let mut g = GaussianSoA::new(0);
        for i in (0..scene.len()).filter(|i| !apple.contains(i)) {
            g.push_from(&scene.gaussians, i);
        }
        g
    };
    delete(&mut scene, &apple).unwrap();
    assert_eq!(scene.gaussians, kept);
    assert!(select_by_label(&scene, "apple").unwrap().is_empty());
}

#[test]
fn inserting_into_an_empty_host_reproduces_the_sub_scene() {
    let sub = flat_scene(9, 25);
    let mut host = sub.clone();
    let all: Vec<usize> = (0..host.len()).collect();
    delete(&mut host, &all).unwrap();
    let r = insert(&mut host, &sub, [0.0; 3]).unwrap();
    assert_eq!((r.first_id, r.count), (0, 25));
    assert!(r.new_labels.is_empty());
    let cam = front_camera(32, 32);
    assert_eq!(render(&host, &cam).color, render(&sub, &cam).color);

    let mut shifted = host.clone();
    delete(&mut shifted, &all).unwrap();
    insert(&mut shifted, &sub, [0.1, 0.0, 0.2]).unwrap();
    let mut moved = sub.clone();
    translate(&mut moved, &all, [0.1, 0.0, 0.2]).unwrap();
    assert_eq!(render(&shifted, &cam).color, render(&moved, &cam).color);
}

#[test]
fn inserting_higher_degree_content_truncates_bands() {
    let mut host = flat_scene(1, 3);
    let sub: Scene<f32> = random_scene(&SceneSpec { gaussians: 2, ..SceneSpec::default() }, &mut rng(2));
    assert_eq!(sub.sh_degree(), 3);
    insert(&mut host, &sub, [0.0; 3]).unwrap();
    assert_eq!(host.sh_degree(), 0);
    assert_eq!(host.gaussians.sh_of(3), &sub.gaussians.sh_of(0)[..3]);
}
