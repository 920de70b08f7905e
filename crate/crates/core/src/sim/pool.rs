use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::Serialize;
use tokio::sync::Notify;

use super::SimError;

/// Container pool parameters. Delays are simulation-configured; `seed`
/// fixes the jitter RNG for reproducible runs.
#[derive(Debug, Clone)]
pub struct PoolConfig {
    pub cold_start_delay_ms: u64,
    pub jitter_ms: u64,
    pub idle_eviction_ms: u128,
    pub max_containers_per_action: usize,
    pub max_total_containers: usize,
    /// 0 disables queueing: acquisition at capacity is rejected (429).
    pub queue_capacity: usize,
    pub seed: Option<u64>,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            cold_start_delay_ms: 500,
            jitter_ms: 50,
            idle_eviction_ms: 60_000,
            max_containers_per_action: 16,
            max_total_containers: 64,
            queue_capacity: 0,
            seed: None,
        }
    }
}

impl PoolConfig {
    /// Zero-delay variant for fast tests.
    pub fn instant() -> Self {
        PoolConfig {
            cold_start_delay_ms: 0,
            jitter_ms: 0,
            ..PoolConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum ContainerState {
    Starting,
    Idle,
    Busy,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimContainer {
    #[serde(rename = "containerId")]
    pub container_id: u64,
    #[serde(rename = "actionName")]
    pub action_name: String,
    pub state: ContainerState,
    #[serde(rename = "createdAt")]
    pub created_ms: u128,
    #[serde(rename = "lastUsedAt")]
    pub last_used_ms: u128,
    #[serde(skip)]
    retired: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PoolMetrics {
    #[serde(rename = "totalContainers")]
    pub total: usize,
    pub busy: usize,
    pub idle: usize,
    pub starting: usize,
    #[serde(rename = "perAction")]
    pub per_action: BTreeMap<String, usize>,
    #[serde(rename = "maxBusyObserved")]
    pub max_busy_observed: usize,
    #[serde(rename = "coldStartsTotal")]
    pub cold_starts_total: u64,
}

pub(super) struct Lease {
    pub container_id: u64,
    pub cold: bool,
}

#[derive(Default)]
struct State {
    containers: Vec<SimContainer>,
    next_id: u64,
    max_busy_observed: usize,
    cold_starts_total: u64,
    waiters: usize,
}

pub(super) struct Pool {
    state: Mutex<State>,
    notify: Notify,
    max_per_action: usize,
    max_total: usize,
    queue_capacity: usize,
}

impl Pool {
    pub fn new(config: PoolConfig) -> Self {
        Pool {
            state: Mutex::new(State::default()),
            notify: Notify::new(),
            max_per_action: config.max_containers_per_action,
            max_total: config.max_total_containers,
            queue_capacity: config.queue_capacity,
        }
    }

    /// Take an idle container (hot) or create one (cold). At capacity:
    /// reject, or queue FIFO-ish up to `queue_capacity` waiters.
    pub fn acquire(&self, action: &str, now_ms: u128) -> Result<Lease, SimError> {
        match self.try_acquire(action, now_ms) {
            Ok(lease) => Ok(lease),
            Err(SimError::CapacityExceeded) if self.queue_capacity > 0 => {
                Err(SimError::CapacityExceeded) // queued path is acquire_waiting
            }
            Err(e) => Err(e),
        }
    }

    pub async fn acquire_waiting(&self, action: &str, now_ms: u128) -> Result<Lease, SimError> {
        loop {
            match self.try_acquire(action, now_ms) {
                Ok(lease) => return Ok(lease),
                Err(SimError::CapacityExceeded) => {
                    {
                        let mut state = self.state.lock().unwrap();
                        if state.waiters >= self.queue_capacity {
                            return Err(SimError::CapacityExceeded);
                        }
                        state.waiters += 1;
                    }
                    self.notify.notified().await;
                    self.state.lock().unwrap().waiters -= 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn try_acquire(&self, action: &str, now_ms: u128) -> Result<Lease, SimError> {
        let mut state = self.state.lock().unwrap();
        if let Some(c) = state
            .containers
            .iter_mut()
            .find(|c| c.action_name == action && c.state == ContainerState::Idle && !c.retired)
        {
            c.state = ContainerState::Busy;
            c.last_used_ms = now_ms;
            let id = c.container_id;
            bump_busy(&mut state);
            return Ok(Lease {
                container_id: id,
                cold: false,
            });
        }

        let for_action = state
            .containers
            .iter()
            .filter(|c| c.action_name == action)
            .count();
        if for_action >= self.max_per_action || state.containers.len() >= self.max_total {
            return Err(SimError::CapacityExceeded);
        }

        state.next_id += 1;
        let id = state.next_id;
        state.containers.push(SimContainer {
            container_id: id,
            action_name: action.to_string(),
            state: ContainerState::Starting,
            created_ms: now_ms,
            last_used_ms: now_ms,
            retired: false,
        });
        state.cold_starts_total += 1;
        bump_busy(&mut state);
        Ok(Lease {
            container_id: id,
            cold: true,
        })
    }

    pub fn mark_started(&self, lease: &Lease, now_ms: u128) {
        let mut state = self.state.lock().unwrap();
        if let Some(c) = state
            .containers
            .iter_mut()
            .find(|c| c.container_id == lease.container_id)
        {
            c.state = ContainerState::Busy;
            c.last_used_ms = now_ms;
        }
    }

    pub fn release(&self, lease: &Lease, now_ms: u128) {
        let mut state = self.state.lock().unwrap();
        if let Some(pos) = state
            .containers
            .iter()
            .position(|c| c.container_id == lease.container_id)
        {
            if state.containers[pos].retired {
                state.containers.remove(pos);
            } else {
                let c = &mut state.containers[pos];
                c.state = ContainerState::Idle;
                c.last_used_ms = now_ms;
            }
        }
        drop(state);
        self.notify.notify_waiters();
    }

    /// Drop idle containers of a replaced action; busy ones are retired and
    /// removed on release.
    pub fn invalidate_action(&self, action: &str) {
        let mut state = self.state.lock().unwrap();
        state
            .containers
            .retain(|c| c.action_name != action || c.state != ContainerState::Idle);
        for c in state
            .containers
            .iter_mut()
            .filter(|c| c.action_name == action)
        {
            c.retired = true;
        }
    }

    pub fn evict_idle(&self, now_ms: u128, max_idle_ms: u128) -> usize {
        let mut state = self.state.lock().unwrap();
        let before = state.containers.len();
        state.containers.retain(|c| {
            c.state != ContainerState::Idle || now_ms.saturating_sub(c.last_used_ms) < max_idle_ms
        });
        let evicted = before - state.containers.len();
        drop(state);
        if evicted > 0 {
            self.notify.notify_waiters();
        }
        evicted
    }

    pub fn evict_all_idle(&self) -> usize {
        let mut state = self.state.lock().unwrap();
        let before = state.containers.len();
        state.containers.retain(|c| c.state != ContainerState::Idle);
        let evicted = before - state.containers.len();
        drop(state);
        if evicted > 0 {
            self.notify.notify_waiters();
        }
        evicted
    }

    pub fn metrics(&self) -> PoolMetrics {
        let state = self.state.lock().unwrap();
        let mut per_action: BTreeMap<String, usize> = BTreeMap::new();
        let (mut busy, mut idle, mut starting) = (0, 0, 0);
        for c in &state.containers {
            *per_action.entry(c.action_name.clone()).or_default() += 1;
            match c.state {
                ContainerState::Busy => busy += 1,
                ContainerState::Idle => idle += 1,
                ContainerState::Starting => starting += 1,
            }
        }
        PoolMetrics {
            total: state.containers.len(),
            busy,
            idle,
            starting,
            per_action,
            max_busy_observed: state.max_busy_observed,
            cold_starts_total: state.cold_starts_total,
        }
    }

    pub fn reset_high_water(&self) {
        self.state.lock().unwrap().max_busy_observed = 0;
    }
}

fn bump_busy(state: &mut State) {
    let busy = state
        .containers
        .iter()
        .filter(|c| c.state != ContainerState::Idle)
        .count();
    if busy > state.max_busy_observed {
        state.max_busy_observed = busy;
    }
}
