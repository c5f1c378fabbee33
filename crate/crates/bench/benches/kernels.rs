use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use gads_core::coarse_depth::{build_cost_volume, inverse_depth_hypotheses, regress_depth, CostVolumeParams};
use gads_core::geometry::pixel_center;
use gads_core::harness::suite::{suite_scene, textured_plane_scene, SuiteScene};
use gads_core::rendering::{composite_color, render_view, sample_gads, sample_stratified};
use gads_core::{PosedImage, RaySampler, RenderSettings, SamplerBudget};

fn scene() -> SuiteScene {
    suite_scene("sphere_on_plane", 0, 64, 64, 5).unwrap()
}

fn center_ray(s: &SuiteScene) -> gads_core::Ray {
    s.rig.target.ray(pixel_center(32, 40), s.rig.near, s.rig.far).unwrap()
}

fn samplers(c: &mut Criterion) {
    let s = scene();
    let ray = center_ray(&s);
    let mut g = c.benchmark_group("ray_sampling");
    for n in [48usize, 64, 128] {
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("stratified", n), &n, |b, &n| {
            b.iter(|| sample_stratified(&s.description, black_box(&ray), n, 7).unwrap())
        });
    }
    // A coarse depth near the sphere surface, as the plane sweep would give.
    let d_c = gads_core::fields::ground_truth_depth(&s.description, &ray);
    for (nc, nd) in [(24usize, 24usize), (16, 16), (8, 4)] {
        let budget = SamplerBudget::new(nc, nd, 7).unwrap();
        g.throughput(Throughput::Elements((nc + nd) as u64));
        g.bench_with_input(BenchmarkId::new("gads", format!("{nc}+{nd}")), &budget, |b, budget| {
            b.iter(|| sample_gads(&s.description, black_box(&ray), d_c, 0.8, budget).unwrap())
        });
    }
    g.finish();
}

fn compositing(c: &mut Criterion) {
    let s = scene();
    let ray = center_ray(&s);
    let mut g = c.benchmark_group("compositing");
    for n in [64usize, 1024] {
        let samples = sample_stratified(&s.description, &ray, n, 3).unwrap();
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::from_parameter(n), &samples, |b, samples| {
            b.iter(|| composite_color(black_box(samples), s.description.background))
        });
    }
    g.finish();
}

fn cost_volume(c: &mut Criterion) {
    let plane = textured_plane_scene(0, 64, 64, 4, 3.0).unwrap();
    let settings = RenderSettings {
        near: plane.rig.near,
        far: plane.rig.far,
        seed: 1,
        eps_bg: 1e-3,
        background: plane.description.background,
    };
    let refs: Vec<PosedImage> = plane
        .rig
        .references
        .iter()
        .map(|cam| PosedImage {
            camera: *cam,
            image: render_view(&plane.description, cam, &RaySampler::Stratified { n: 128 }, &settings)
                .unwrap()
                .image
                .image,
        })
        .collect();
    let hyps = inverse_depth_hypotheses(1.5, 6.0, 32).unwrap();
    let mut g = c.benchmark_group("plane_sweep");
    g.sample_size(20);
    for box_filter in [false, true] {
        let params = CostVolumeParams {
            box_filter,
            ..CostVolumeParams::default()
        };
        let name = if box_filter { "filtered" } else { "raw" };
        g.bench_function(BenchmarkId::new("cost_volume_64x64x32", name), |b| {
            b.iter(|| build_cost_volume(&plane.rig.target, black_box(&refs), &hyps, &params).unwrap())
        });
    }
    let vol = build_cost_volume(&plane.rig.target, &refs, &hyps, &CostVolumeParams::default()).unwrap();
    g.bench_function("regress_depth_64x64x32", |b| {
        b.iter(|| regress_depth(black_box(&vol), 1e-4).unwrap())
    });
    g.finish();
}

criterion_group!(benches, samplers, compositing, cost_volume);
criterion_main!(benches);
