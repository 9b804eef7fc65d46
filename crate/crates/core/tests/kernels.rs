use gsmc::graph::{MapGraph, Plan};
use gsmc::kernels::{estimate_k, split_forest_space, split_graph_space, CutRule, PhiRule};
use gsmc::particle::ForestPlan;
use gsmc::problem::Problem;
use gsmc::scheme::{DistrictingScheme, ScheduleKind, SplittingSchedule};
use gsmc::target::{PopBounds, Space, TargetSpec};
use gsmc::trees::wilson_tree;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn problem(rows: usize, cols: usize, d: u32, tol: f64, space: Space) -> Problem {
    let graph = MapGraph::grid(rows, cols);
    let scheme = DistrictingScheme::single_member(d);
    let bounds = PopBounds::from_tolerance(graph.total_pop(), d, tol);
    let schedule = SplittingSchedule::new(ScheduleKind::DistrictOnly, scheme).unwrap();
    Problem::new(graph, schedule, TargetSpec::new(1.0, bounds, space).unwrap()).unwrap()
}

#[test]
fn uniform_balanced_accepts_at_least_as_often_as_top_k() {
    let draws = 3_000;
    let graph_space = problem(7, 7, 7, 0.01, Space::Graph);
    let forest_space = problem(7, 7, 7, 0.01, Space::Forest);
    let single = Plan::single(49, 7);
    let all: Vec<usize> = (0..49).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let tree = wilson_tree(&forest_space.graph, &all, 7, &mut rng).unwrap();
    let forest = ForestPlan::new(single.clone(), vec![tree]).unwrap();
    let k = estimate_k(&graph_space, &[&single], &[1.0], PhiRule::Uniform, 50, &mut rng).unwrap();
    let top_k = (0..draws).filter(|_| split_graph_space(&graph_space, &single, 0, k, &mut rng).unwrap().is_some()).count();
    let uniform = (0..draws)
        .filter(|_| split_forest_space(&forest_space, &forest, 0, CutRule::UniformBalanced, &mut rng).unwrap().is_some())
        .count();
    assert!(uniform >= top_k, "uniform-balanced {uniform} < top-{k} {top_k}");
}

#[test]
fn k_estimate_on_two_by_two_is_one() {
    let p = problem(2, 2, 2, 0.0, Space::Graph);
    let single = Plan::single(4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    assert_eq!(estimate_k(&p, &[&single], &[1.0], PhiRule::Uniform, 25, &mut rng).unwrap(), 1);
}
