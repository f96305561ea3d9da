//! Core accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ExecError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourcePool {
    total: u32,
    allocations: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Allocation {
    Granted(u32),
    Deferred,
}

impl ResourcePool {
    pub fn new(total: u32) -> Result<Self, ExecError> {
        if total == 0 {
            return Err(ExecError::Config("pool needs at least one core".into()));
        }
        Ok(ResourcePool { total, allocations: BTreeMap::new() })
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn used(&self) -> u32 {
        self.allocations.values().sum()
    }

    pub fn free(&self) -> u32 {
        self.total - self.used()
    }

    pub fn allocation(&self, job_id: &str) -> Option<u32> {
        self.allocations.get(job_id).copied()
    }

    /// Grants `min(request, free)`, at least one core; Deferred when the
    /// pool is full.
    pub fn allocate(&mut self, job_id: &str, request: u32) -> Allocation {
        let free = self.free();
        if free == 0 {
            return Allocation::Deferred;
        }
        let grant = request.clamp(1, free);
        *self.allocations.entry(job_id.to_string()).or_insert(0) += grant;
        Allocation::Granted(grant)
    }

    pub fn release(&mut self, job_id: &str) -> u32 {
        self.allocations.remove(job_id).unwrap_or(0)
    }
}

/// One scheduling pass over ready jobs `(ready_seq, job_id, request)`.
/// Free cores are water-filled (max-min fair) over the earliest-ready
/// jobs, at most one job per free core; a lone job gets `min(request,
/// free)`. Leftover single cores go out in ready order, id tie-break.
pub fn schedule(pool: &mut ResourcePool, ready: &[(u64, String, u32)]) -> Vec<(String, Allocation)> {
    let mut order: Vec<&(u64, String, u32)> = ready.iter().collect();
    order.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    let k = order.len().min(pool.free() as usize);
    let want = |i: usize| order[i].2.max(1);
    let mut grant = vec![0u32; k];
    let mut remaining = pool.free();
    loop {
        let open: Vec<usize> = (0..k).filter(|&i| grant[i] < want(i)).collect();
        if open.is_empty() || remaining == 0 {
            break;
        }
        let share = remaining / open.len() as u32;
        if share == 0 {
            for &i in open.iter().take(remaining as usize) {
                grant[i] += 1;
            }
            break;
        }
        for &i in &open {
            let g = share.min(want(i) - grant[i]);
            grant[i] += g;
            remaining -= g;
        }
    }
    order
        .iter()
        .enumerate()
        .map(|(i, (_, id, _))| {
            let a = if i < k { pool.allocate(id, grant[i]) } else { Allocation::Deferred };
            (id.clone(), a)
        })
        .collect()
}
