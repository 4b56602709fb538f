//! Shared test support: a brute-force linearizability oracle and small
//! generators. The oracle is deliberately independent of the library's
//! search: it tries permutations outright.

use lambda_snap::histories::{completed_ops, History, OpRecord};
use lambda_snap::oracle::OracleState;

/// All-permutations linearizability decision for histories of up to ~8
/// operations: every subset of pending updates, every order, filtered by
/// real-time precedence and oracle replay.
pub fn brute_force_linearizable(history: &History) -> bool {
    let (ops, m) = completed_ops(history);
    let (required, optional): (Vec<&OpRecord>, Vec<&OpRecord>) =
        ops.iter().partition(|o| o.response.is_some());
    assert!(ops.len() <= 10, "brute force is for small histories");
    let subsets = 1usize << optional.len();
    for mask in 0..subsets {
        let mut chosen: Vec<&OpRecord> = required.clone();
        for (i, op) in optional.iter().enumerate() {
            if mask & (1 << i) != 0 {
                chosen.push(op);
            }
        }
        let mut order: Vec<usize> = (0..chosen.len()).collect();
        if permute(&mut order, 0, &chosen, m) {
            return true;
        }
    }
    false
}

fn permute(order: &mut Vec<usize>, k: usize, ops: &[&OpRecord], m: usize) -> bool {
    if k == order.len() {
        return replays(order, ops, m);
    }
    for i in k..order.len() {
        order.swap(k, i);
        if permute(order, k + 1, ops, m) {
            order.swap(k, i);
            return true;
        }
        order.swap(k, i);
    }
    false
}

fn replays(order: &[usize], ops: &[&OpRecord], m: usize) -> bool {
    // Real-time: nothing may be ordered before an op that responded before
    // it was invoked.
    for (pos, &a) in order.iter().enumerate() {
        for &b in &order[pos + 1..] {
            if let Some(resp_b) = ops[b].response {
                if resp_b < ops[a].invoke {
                    return false;
                }
            }
        }
    }
    let mut state = OracleState::new(m);
    for &i in order {
        let (next, ret) = state.apply(&ops[i].op);
        if let Some(expected) = &ops[i].expected {
            if ret != *expected {
                return false;
            }
        }
        state = next;
    }
    true
}
