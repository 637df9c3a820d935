use std::collections::BTreeMap;
use std::sync::Arc;

use dictator_core::rng::{derive_seed, SimRng};
use dictator_core::{
    axpy, fd_check, gen_blobs, inf_distance, init_params, partition_by_label, run_rounds, solo_trajectory, Activation,
    ClientId, ClientStrategy, DatasetShard, HonestClient, LossEvaluator, ModelSpec, Objective, ParamVector,
    PartitionPlan, ProtocolConfig, Reduction,
};

fn evaluator(spec: ModelSpec, shard: DatasetShard) -> LossEvaluator {
    LossEvaluator::new(spec, Arc::new(shard), Reduction::Mean).unwrap()
}

#[test]
fn gradients_match_finite_differences_on_random_instances() {
    let mut rng = SimRng::new(11);
    let kinds = [None, Some(Activation::Tanh), Some(Activation::Relu)];
    for act in kinds {
        for _ in 0..20 {
            let d = 1 + rng.below(5);
            let c = 2 + rng.below(4);
            let spec = match act {
                None => ModelSpec::linear(d, c),
                Some(a) => ModelSpec::mlp(d, 1 + rng.below(6), c, a),
            };
            let rows = 2 + rng.below(10);
            let features = (0..rows * d).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let labels = (0..rows).map(|_| rng.below(c)).collect();
            let ev = evaluator(spec, DatasetShard::new(features, d, labels).unwrap());
            let theta = init_params(&spec, rng.below(1 << 30) as u64).unwrap();
            let err = fd_check(&ev, &theta, 1e-5).unwrap();
            assert!(err <= 1e-5, "{act:?} {spec:?}: {err}");
        }
    }
}

#[test]
fn linear_model_fits_blobs() {
    let data = gen_blobs(10, 16, 50, 0.5, 3).unwrap();
    let spec = ModelSpec::linear(16, 10);
    let ev = evaluator(spec, data);
    let theta0 = init_params(&spec, 4).unwrap();
    let path = solo_trajectory(&ev, &theta0, 0.5, 200).unwrap();
    let last = path.last().unwrap();
    assert!(ev.loss(last).unwrap() < ev.loss(&theta0).unwrap());
    assert!(ev.accuracy(last).unwrap() >= 0.95);
}

fn honest_setup(n: usize) -> (Vec<(ClientId, Arc<LossEvaluator>)>, ParamVector) {
    let data = gen_blobs(2 * n, 4, 12, 0.7, derive_seed(5, 1)).unwrap();
    let plan = PartitionPlan::contiguous(n, 2);
    let shards = partition_by_label(&data, &plan).unwrap();
    let spec = ModelSpec::linear(4, 2 * n);
    let evs = shards
        .into_iter()
        .map(|(id, s)| (id, Arc::new(evaluator(spec, s))))
        .collect();
    (evs, init_params(&spec, derive_seed(5, 2)).unwrap())
}

fn honest_clients(evs: &[(ClientId, Arc<LossEvaluator>)]) -> Vec<Box<dyn ClientStrategy>> {
    evs.iter()
        .map(|(id, ev)| Box::new(HonestClient::new(*id, ev.clone() as Arc<dyn Objective>)) as Box<dyn ClientStrategy>)
        .collect()
}

#[test]
fn honest_rounds_follow_the_gradient_recursion() {
    let (evs, theta0) = honest_setup(5);
    let cfg = ProtocolConfig {
        eta: 0.1,
        rounds: 4,
        num_clients: 5,
    };
    let records = run_rounds(&cfg, &mut honest_clients(&evs), theta0.clone(), &BTreeMap::new()).unwrap();
    // re-simulate by hand up to θ_3
    let mut theta = theta0;
    for record in records.iter().take(3) {
        assert!(record.theta_before.bitwise_eq(&theta));
        let mut step = theta.clone();
        for (_, ev) in &evs {
            step = axpy(-cfg.eta, &ev.gradient(&theta).unwrap(), &step).unwrap();
        }
        assert!(inf_distance(&step, &record.theta_after).unwrap() <= 1e-12);
        theta = record.theta_after.clone();
    }
    for r in &records {
        assert!(r.recompute(cfg.eta).unwrap().bitwise_eq(&r.theta_after));
        assert_eq!(r.updates.len(), 5);
    }
}

#[test]
fn identical_inputs_give_bitwise_identical_runs() {
    let (evs, theta0) = honest_setup(3);
    let cfg = ProtocolConfig {
        eta: 0.2,
        rounds: 5,
        num_clients: 3,
    };
    let holdout: BTreeMap<ClientId, LossEvaluator> = evs.iter().map(|(id, ev)| (*id, (**ev).clone())).collect();
    let a = run_rounds(&cfg, &mut honest_clients(&evs), theta0.clone(), &holdout).unwrap();
    let b = run_rounds(&cfg, &mut honest_clients(&evs), theta0, &holdout).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(x.theta_after.bitwise_eq(&y.theta_after));
        for ((_, m), (_, n)) in x.per_client_metrics.iter().zip(&y.per_client_metrics) {
            assert_eq!(m.loss.to_bits(), n.loss.to_bits());
            assert_eq!(m.accuracy.to_bits(), n.accuracy.to_bits());
        }
    }
    assert_eq!(a.last().unwrap().per_client_metrics.len(), 3);
}

#[test]
fn generated_data_depends_only_on_the_seed() {
    let a = gen_blobs(4, 3, 5, 1.0, 9).unwrap();
    let b = gen_blobs(4, 3, 5, 1.0, 9).unwrap();
    let c = gen_blobs(4, 3, 5, 1.0, 10).unwrap();
    assert_eq!(a.features(), b.features());
    assert_ne!(a.features(), c.features());
    let (train, test) = a.split_holdout(0.25, 1).unwrap();
    assert_eq!(train.rows() + test.rows(), a.rows());
    assert_eq!(test.rows(), 5);
}
