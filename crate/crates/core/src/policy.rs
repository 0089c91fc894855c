//! Joint policies: a heading for every pursuer given the world state.

use crate::env::{self, JointAction, WorldState};
use crate::error::{Error, Result};
use crate::tinynet::Mlp;

pub trait JointPolicy {
    fn n_agents(&self) -> usize;

    /// Heading chosen by the pursuer in slot `agent`.
    fn heading(&self, state: &WorldState, agent: usize) -> Result<f64>;

    fn joint_action(&self, state: &WorldState) -> Result<JointAction> {
        if state.n_pursuers() != self.n_agents() {
            return Err(Error::Contract(format!(
                "policy drives {} agents, state has {}",
                self.n_agents(),
                state.n_pursuers()
            )));
        }
        let headings = (0..self.n_agents())
            .map(|i| self.heading(state, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(JointAction::new(headings))
    }
}

/// One actor per slot; slot `i` always runs `actors[i]` on its own observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorTeam {
    pub actors: Vec<Mlp>,
}

impl ActorTeam {
    pub fn new(actors: Vec<Mlp>) -> Self {
        Self { actors }
    }
}

impl JointPolicy for ActorTeam {
    fn n_agents(&self) -> usize {
        self.actors.len()
    }

    fn heading(&self, state: &WorldState, agent: usize) -> Result<f64> {
        let actor = self
            .actors
            .get(agent)
            .ok_or_else(|| Error::Contract(format!("no actor for agent {agent}")))?;
        let obs = env::observe(state, agent)?.to_vec();
        actor.actor_heading(&obs)
    }
}

/// Every pursuer runs straight at the evader.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Greedy {
    pub n_agents: usize,
}

impl JointPolicy for Greedy {
    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn heading(&self, state: &WorldState, agent: usize) -> Result<f64> {
        env::greedy_heading(state, agent)
    }
}

impl<P: JointPolicy + ?Sized> JointPolicy for &P {
    fn n_agents(&self) -> usize {
        (**self).n_agents()
    }

    fn heading(&self, state: &WorldState, agent: usize) -> Result<f64> {
        (**self).heading(state, agent)
    }
}
