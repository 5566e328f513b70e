//! ε-greedy selection and DQN training steps.

use std::collections::BTreeSet;

use rand::Rng;

use super::adam::Adam;
use super::network::QNetwork;
use crate::config::DqnVariant;
use crate::error::{DdrError, Result};
use crate::experience::Experience;

/// Index of the largest unmasked value; ties go to the lowest index.
pub fn masked_argmax(q: &[f64], mask: &BTreeSet<usize>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (a, &v) in q.iter().enumerate() {
        if mask.contains(&a) {
            continue;
        }
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((a, v)),
        }
    }
    best.map(|(a, _)| a)
}

/// ε-greedy choice outside `mask`. The exploration coin is always drawn so
/// that rng consumption does not depend on the network.
pub fn select_from_q<R: Rng + ?Sized>(
    q: &[f64],
    epsilon: f64,
    mask: &BTreeSet<usize>,
    rng: &mut R,
) -> Result<usize> {
    let allowed: Vec<usize> = (0..q.len()).filter(|a| !mask.contains(a)).collect();
    if allowed.is_empty() {
        return Err(DdrError::RescueExhausted);
    }
    let coin: f64 = rng.gen();
    if coin < epsilon {
        return Ok(allowed[rng.gen_range(0..allowed.len())]);
    }
    Ok(masked_argmax(q, mask).expect("non-empty allowed set"))
}

pub fn select_action<R: Rng + ?Sized>(
    net: &QNetwork,
    state: &[f64],
    epsilon: f64,
    mask: &BTreeSet<usize>,
    rng: &mut R,
) -> Result<usize> {
    let q = net.forward(state)?;
    select_from_q(&q, epsilon, mask, rng)
}

pub fn sync_target(net: &QNetwork) -> QNetwork {
    net.clone()
}

/// Bootstrapped regression targets for a batch.
pub fn td_targets(
    net: &QNetwork,
    target_net: &QNetwork,
    batch: &[&Experience],
    gamma: f64,
    variant: DqnVariant,
) -> Result<Vec<f64>> {
    let empty = BTreeSet::new();
    batch
        .iter()
        .map(|e| {
            if e.done {
                return Ok(e.reward);
            }
            let tq = target_net.forward(&e.next_state)?;
            let bootstrap = match variant {
                DqnVariant::Double => {
                    let oq = net.forward(&e.next_state)?;
                    tq[masked_argmax(&oq, &empty).unwrap_or(0)]
                }
                DqnVariant::Vanilla | DqnVariant::Dueling => {
                    tq.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
            };
            Ok(e.reward + gamma * bootstrap)
        })
        .collect()
}

/// One Adam update on the mean squared TD error; returns the loss before
/// the update.
pub fn train_step(
    net: &mut QNetwork,
    target_net: &QNetwork,
    batch: &[&Experience],
    gamma: f64,
    variant: DqnVariant,
    opt: &mut Adam,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(DdrError::Precondition("empty training batch".into()));
    }
    if target_net.params().len() != net.params().len() {
        return Err(DdrError::Precondition("target network shape differs".into()));
    }
    let targets = td_targets(net, target_net, batch, gamma, variant)?;
    let states: Vec<&[f64]> = batch.iter().map(|e| e.state.as_slice()).collect();
    let actions: Vec<usize> = batch.iter().map(|e| e.action).collect();
    let (loss, grads) = net.loss_and_grads(&states, &actions, &targets)?;
    if !loss.is_finite() {
        return Err(DdrError::NanLoss(format!(
            "non-finite loss {loss} at optimizer step {}",
            opt.step + 1
        )));
    }
    opt.update(net.params_mut(), &grads);
    Ok(loss)
}

/// Online network, target network and optimizer bundled together.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub online: QNetwork,
    pub target: QNetwork,
    pub optimizer: Adam,
    pub variant: DqnVariant,
    pub gamma: f64,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        variant: DqnVariant,
        learning_rate: f64,
        gamma: f64,
        rng: &mut R,
    ) -> Self {
        let online = QNetwork::new(input_dim, hidden_dim, output_dim, variant, rng);
        let optimizer = Adam::new(learning_rate, online.params());
        DqnAgent {
            target: sync_target(&online),
            online,
            optimizer,
            variant,
            gamma,
        }
    }

    pub fn from_parts(online: QNetwork, optimizer: Adam, variant: DqnVariant, gamma: f64) -> Self {
        DqnAgent {
            target: sync_target(&online),
            online,
            optimizer,
            variant,
            gamma,
        }
    }

    pub fn train_batch(&mut self, batch: &[&Experience]) -> Result<f64> {
        train_step(
            &mut self.online,
            &self.target,
            batch,
            self.gamma,
            self.variant,
            &mut self.optimizer,
        )
    }

    pub fn sync(&mut self) {
        self.target = sync_target(&self.online);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experience::ExperienceKind;
    use crate::rng::{stream, Stream};

    #[test]
    fn greedy_and_masked_choices() {
        let q = [0.5, 0.3, 0.1];
        let mut rng = stream(0, Stream::Exploration);
        assert_eq!(select_from_q(&q, 0.0, &BTreeSet::new(), &mut rng).unwrap(), 0);
        assert_eq!(select_from_q(&q, 0.0, &BTreeSet::from([0]), &mut rng).unwrap(), 1);
        assert!(matches!(
            select_from_q(&q, 0.0, &BTreeSet::from([0, 1, 2]), &mut rng),
            Err(DdrError::RescueExhausted)
        ));
    }

    #[test]
    fn ties_go_to_lowest_id() {
        assert_eq!(masked_argmax(&[1.0, 2.0, 2.0], &BTreeSet::new()), Some(1));
    }

    #[test]
    fn full_exploration_is_uniform_over_unmasked() {
        let q = [0.5, 0.3, 0.1];
        let mask = BTreeSet::from([0]);
        let mut rng = stream(11, Stream::Exploration);
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[select_from_q(&q, 1.0, &mask, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[0], 0);
        // Binomial(10000, 0.5): sigma = 50.
        for c in &counts[1..] {
            assert!((*c as f64 - 5000.0).abs() <= 150.0, "{counts:?}");
        }
    }

    fn terminal(reward: f64, dim: usize, action: usize) -> Experience {
        Experience {
            state: vec![0.5; dim],
            action,
            next_state: vec![0.0; dim],
            reward,
            done: true,
            kind: ExperienceKind::Original,
        }
    }

    #[test]
    fn all_terminal_batch_against_zero_net() {
        let mut net = QNetwork::zeros(4, 8, 3, DqnVariant::Vanilla);
        let target = sync_target(&net);
        let batch: Vec<Experience> = (0..16).map(|i| terminal(-30.0, 4, i % 3)).collect();
        let refs: Vec<&Experience> = batch.iter().collect();
        let mut opt = Adam::new(0.001, net.params());
        let loss = train_step(&mut net, &target, &refs, 0.95, DqnVariant::Vanilla, &mut opt).unwrap();
        assert_eq!(loss, 900.0);
    }

    #[test]
    fn zero_discount_makes_double_and_vanilla_agree() {
        let mut rng = stream(5, Stream::Init);
        let net = QNetwork::new(4, 8, 3, DqnVariant::Vanilla, &mut rng);
        let target = QNetwork::new(4, 8, 3, DqnVariant::Vanilla, &mut rng);
        let batch: Vec<Experience> = (0..8)
            .map(|i| Experience {
                state: vec![i as f64 * 0.1; 4],
                action: i % 3,
                next_state: vec![0.3; 4],
                reward: i as f64 - 4.0,
                done: false,
                kind: ExperienceKind::Original,
            })
            .collect();
        let refs: Vec<&Experience> = batch.iter().collect();
        let v = td_targets(&net, &target, &refs, 0.0, DqnVariant::Vanilla).unwrap();
        let d = td_targets(&net, &target, &refs, 0.0, DqnVariant::Double).unwrap();
        assert_eq!(v, d);
    }

    #[test]
    fn target_is_frozen_until_sync() {
        let mut rng = stream(9, Stream::Init);
        let mut agent = DqnAgent::new(4, 8, 3, DqnVariant::Vanilla, 0.01, 0.95, &mut rng);
        let probe = [0.2, -0.1, 0.7, 1.0];
        assert_eq!(agent.online.forward(&probe).unwrap(), agent.target.forward(&probe).unwrap());
        let batch: Vec<Experience> = (0..4).map(|i| terminal(5.0, 4, i % 3)).collect();
        let refs: Vec<&Experience> = batch.iter().collect();
        let before = agent.target.clone();
        agent.train_batch(&refs).unwrap();
        assert_eq!(agent.target, before);
        assert_ne!(agent.online.forward(&probe).unwrap(), agent.target.forward(&probe).unwrap());
        agent.sync();
        agent.sync();
        assert_eq!(agent.online, agent.target);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let mut net = QNetwork::zeros(2, 4, 2, DqnVariant::Vanilla);
        let target = sync_target(&net);
        let e = terminal(f64::NAN, 2, 0);
        let mut opt = Adam::new(0.001, net.params());
        assert!(matches!(
            train_step(&mut net, &target, &[&e], 0.9, DqnVariant::Vanilla, &mut opt),
            Err(DdrError::NanLoss(_))
        ));
    }
}
