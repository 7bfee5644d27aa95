//! Exhaustive instances of the coded random-access decoding problem and an
//! independent peeling oracle.
//!
//! An instance gives every device at most one (slot, pilot) resource per slot.
//! Devices are encoded as base-`(P+1)` words with one digit per slot, where
//! digit 0 means silent and digit `p+1` means pilot `p`.

use mmimo_iot::mmtc::{genie_singleton, peel, replay_sic, Transmission};

pub struct Space {
    pub slots: usize,
    pub pilots: usize,
}

impl Space {
    pub fn num_patterns(&self) -> usize {
        (self.pilots + 1).pow(self.slots as u32)
    }

    pub fn decode(&self, pattern: usize) -> Vec<Transmission> {
        let base = self.pilots + 1;
        let mut p = pattern;
        let mut txs = Vec::new();
        for slot in 0..self.slots {
            let d = p % base;
            p /= base;
            if d > 0 {
                txs.push(Transmission { slot, pilot: d - 1 });
            }
        }
        txs
    }

    fn encode(&self, digits: &[usize]) -> usize {
        digits.iter().rev().fold(0, |acc, &d| acc * (self.pilots + 1) + d)
    }

    fn digits(&self, pattern: usize) -> Vec<usize> {
        let base = self.pilots + 1;
        (0..self.slots).scan(pattern, |p, _| {
            let d = *p % base;
            *p /= base;
            Some(d)
        })
        .collect()
    }

    /// Pattern images under every slot permutation combined with every
    /// per-slot relabelling of the pilots. `table[g][pattern]`.
    fn symmetry_table(&self) -> Vec<Vec<usize>> {
        let slot_perms = permutations(self.slots);
        let pilot_perms = permutations(self.pilots);
        let mut relabels: Vec<Vec<&Vec<usize>>> = vec![vec![]];
        for _ in 0..self.slots {
            relabels = relabels
                .into_iter()
                .flat_map(|r| {
                    pilot_perms.iter().map(move |p| {
                        let mut r = r.clone();
                        r.push(p);
                        r
                    })
                })
                .collect();
        }
        let mut table = Vec::new();
        for sp in &slot_perms {
            for rl in &relabels {
                let row = (0..self.num_patterns())
                    .map(|pat| {
                        let d = self.digits(pat);
                        let mut out = vec![0; self.slots];
                        for s in 0..self.slots {
                            out[sp[s]] = if d[s] == 0 { 0 } else { rl[s][d[s] - 1] + 1 };
                        }
                        self.encode(&out)
                    })
                    .collect();
                table.push(row);
            }
        }
        table
    }

    pub fn instance(&self, devices: &[usize]) -> Vec<Vec<Transmission>> {
        devices.iter().map(|&d| self.decode(d)).collect()
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn is_canonical(table: &[Vec<usize>], devices: &[usize], scratch: &mut Vec<usize>) -> bool {
    for g in table {
        scratch.clear();
        scratch.extend(devices.iter().map(|&d| g[d]));
        scratch.sort_unstable();
        if scratch.as_slice() < devices {
            return false;
        }
    }
    true
}

/// Visits one representative of every instance with at most `max_devices`
/// devices, up to relabelling devices, slots and per-slot pilots.
///
/// Device lists are sorted multisets. A list whose sorted images under the
/// symmetry group are all lexicographically no smaller is canonical; prefixes
/// of canonical lists are canonical, so the search only extends canonical
/// lists. Leaves are visited without the check, which adds some duplicates
/// but never loses an orbit.
pub fn for_each_orbit(space: &Space, max_devices: usize, mut visit: impl FnMut(&[usize])) -> u64 {
    let table = space.symmetry_table();
    let n = space.num_patterns();
    let mut count = 0;
    let mut stack = vec![(Vec::<usize>::new(), true)];
    let mut scratch = Vec::new();
    while let Some((devices, canonical)) = stack.pop() {
        visit(&devices);
        count += 1;
        if !canonical || devices.len() == max_devices {
            continue;
        }
        let start = devices.last().copied().unwrap_or(0);
        for next in start..n {
            let mut child = devices.clone();
            child.push(next);
            if child.len() == max_devices {
                stack.push((child, false));
            } else if is_canonical(&table, &child, &mut scratch) {
                stack.push((child, true));
            }
        }
    }
    count
}

/// Visits every ordered assignment of patterns to exactly `devices` devices.
pub fn for_each_ordered(space: &Space, devices: usize, mut visit: impl FnMut(&[usize])) -> u64 {
    let n = space.num_patterns();
    let total = n.pow(devices as u32);
    let mut buf = vec![0; devices];
    for mut code in 0..total {
        for d in buf.iter_mut() {
            *d = code % n;
            code /= n;
        }
        visit(&buf);
    }
    total as u64
}

/// Least fixed point of "a device is recovered once some resource it uses
/// carries no other unrecovered device", on bitmasks.
pub fn peeling_oracle(tx: &[Vec<Transmission>], slots: usize, pilots: usize) -> Vec<bool> {
    let mut occupants = vec![0u64; slots * pilots];
    for (k, txs) in tx.iter().enumerate() {
        for t in txs {
            occupants[t.slot * pilots + t.pilot] |= 1 << k;
        }
    }
    let mut done = 0u64;
    loop {
        let mut next = done;
        for (k, txs) in tx.iter().enumerate() {
            let me = 1u64 << k;
            if done & me == 0 && txs.iter().any(|t| occupants[t.slot * pilots + t.pilot] & !done == me) {
                next |= me;
            }
        }
        if next == done {
            break;
        }
        done = next;
    }
    (0..tx.len()).map(|k| done >> k & 1 == 1).collect()
}

/// Runs the library decoder on one instance and checks it against the
/// oracle, including a replay of its SIC trace.
pub fn check_instance(space: &Space, devices: &[usize]) -> Result<(), String> {
    let tx = space.instance(devices);
    let (decoded, trace) = peel(&tx, space.slots, space.pilots, genie_singleton).map_err(|e| e.to_string())?;
    let expected = peeling_oracle(&tx, space.slots, space.pilots);
    if decoded != expected {
        return Err(format!("devices {devices:?}: decoder {decoded:?}, oracle {expected:?}"));
    }
    let replayed = replay_sic(&tx, space.slots, space.pilots, &trace, genie_singleton).map_err(|e| format!("devices {devices:?}: {e}"))?;
    if replayed != decoded || trace.len() != decoded.iter().filter(|&&d| d).count() {
        return Err(format!("devices {devices:?}: trace does not reproduce the decoded set"));
    }
    Ok(())
}

/// Summary of an exhaustive comparison.
pub struct Sweep {
    pub instances: u64,
    pub failures: Vec<String>,
}

pub fn sweep_orbits(space: &Space, max_devices: usize) -> Sweep {
    let mut failures = Vec::new();
    let instances = for_each_orbit(space, max_devices, |d| {
        if let Err(e) = check_instance(space, d) {
            if failures.len() < 5 {
                failures.push(e);
            }
        }
    });
    Sweep { instances, failures }
}

pub fn sweep_ordered(space: &Space, devices: usize) -> Sweep {
    let mut failures = Vec::new();
    let instances = for_each_ordered(space, devices, |d| {
        if let Err(e) = check_instance(space, d) {
            if failures.len() < 5 {
                failures.push(e);
            }
        }
    });
    Sweep { instances, failures }
}
