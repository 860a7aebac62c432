//! Chunked execution with results reduced in chunk order, so output does
//! not depend on the worker count or on scheduling.

use crate::checkpoint::Checkpoint;
use crate::error::CliError;
use num_rational::BigRational;
use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

/// A contiguous piece of work; `tag` names the segment it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunk {
    pub tag: usize,
    pub lo: u64,
    pub hi: u64,
}

/// Splits `range` into pieces of at most `chunk_size`.
pub fn partition(range: Range<u64>, chunk_size: u64) -> Vec<Range<u64>> {
    let size = chunk_size.max(1);
    let mut out = Vec::new();
    let mut lo = range.start;
    while lo < range.end {
        let hi = lo.saturating_add(size).min(range.end);
        out.push(lo..hi);
        lo = hi;
    }
    out
}

/// Chunks covering `[start, ends[0])`, `[ends[0], ends[1])`, …, tagged by
/// segment.
pub fn segmented_chunks(start: u64, ends: &[u64], chunk_size: u64) -> Vec<Chunk> {
    let mut out = Vec::new();
    let mut lo = start;
    for (tag, &end) in ends.iter().enumerate() {
        for r in partition(lo..end.max(lo), chunk_size) {
            out.push(Chunk {
                tag,
                lo: r.start,
                hi: r.end,
            });
        }
        lo = end.max(lo);
    }
    out
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".into()
    }
}

/// Runs `work(i)` for every `i` in `todo` on `threads` workers, calling
/// `on_done` on the calling thread as results arrive. Returns results in
/// the order of `todo`.
fn execute<T, W, D>(
    todo: &[usize],
    threads: usize,
    ranges: &[(u64, u64)],
    work: W,
    mut on_done: D,
) -> Result<Vec<T>, CliError>
where
    T: Send,
    W: Fn(usize) -> Result<T, String> + Sync,
    D: FnMut(usize, &T) -> Result<(), CliError>,
{
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let mut results: Vec<Option<T>> = (0..todo.len()).map(|_| None).collect();
    let mut failure: Option<CliError> = None;
    std::thread::scope(|s| {
        let (tx, rx) = mpsc::channel::<(usize, Result<T, String>)>();
        for _ in 0..threads.max(1).min(todo.len().max(1)) {
            let tx = tx.clone();
            let (next, stop, work) = (&next, &stop, &work);
            s.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let slot = next.fetch_add(1, Ordering::Relaxed);
                if slot >= todo.len() {
                    break;
                }
                let r = catch_unwind(AssertUnwindSafe(|| work(todo[slot]))).unwrap_or_else(|p| Err(panic_message(p)));
                if tx.send((slot, r)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (slot, r) in rx {
            let idx = todo[slot];
            match r {
                Ok(v) => {
                    if failure.is_none() {
                        if let Err(e) = on_done(idx, &v) {
                            failure = Some(e);
                            stop.store(true, Ordering::Relaxed);
                        }
                    }
                    results[slot] = Some(v);
                }
                Err(message) => {
                    stop.store(true, Ordering::Relaxed);
                    let (lo, hi) = ranges[idx];
                    // Report the lowest failing chunk for reproducibility.
                    let replace = match &failure {
                        Some(CliError::Chunk { index, .. }) => idx < *index,
                        Some(_) => false,
                        None => true,
                    };
                    if replace {
                        failure = Some(CliError::Chunk {
                            index: idx,
                            lo,
                            hi,
                            message,
                        });
                    }
                }
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(results.into_iter().map(|r| r.expect("every chunk reported")).collect())
}

/// Evaluates `worker` on each chunk of `range` and folds the results with
/// `reduce` in ascending chunk order, starting from `identity`.
///
/// ```
/// use amoments_cli::parallel::partition_and_reduce;
/// let s = partition_and_reduce(0..1000, 64, 4, 0u64, |r| Ok(r.sum::<u64>()), |a, b| a + b).unwrap();
/// assert_eq!(s, 499_500);
/// ```
pub fn partition_and_reduce<T, W, R>(
    range: Range<u64>,
    chunk_size: u64,
    threads: usize,
    identity: T,
    worker: W,
    reduce: R,
) -> Result<T, CliError>
where
    T: Send,
    W: Fn(Range<u64>) -> Result<T, String> + Sync,
    R: Fn(T, T) -> T,
{
    let chunks = partition(range, chunk_size);
    let ranges: Vec<(u64, u64)> = chunks.iter().map(|r| (r.start, r.end)).collect();
    let todo: Vec<usize> = (0..chunks.len()).collect();
    let parts = execute(&todo, threads, &ranges, |i| worker(chunks[i].clone()), |_, _| Ok(()))?;
    Ok(parts.into_iter().fold(identity, reduce))
}

/// Settings for a checkpointed run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub threads: usize,
    pub checkpoint: Option<PathBuf>,
    pub experiment: String,
    pub config_hash: String,
    /// Abort the process after this many newly completed chunks, leaving
    /// the checkpoint behind (used to exercise resumption).
    pub halt_after: Option<usize>,
    pub verbose: bool,
}

/// Runs `worker` over `chunks`, resuming from and updating the checkpoint
/// in `opts`. Returns each chunk's partial sums in chunk order.
pub fn run_chunks<W>(chunks: &[Chunk], opts: &RunOptions, worker: W) -> Result<Vec<Vec<BigRational>>, CliError>
where
    W: Fn(&Chunk) -> Result<Vec<BigRational>, String> + Sync,
{
    let mut cp = Checkpoint::new(&opts.experiment, &opts.config_hash, chunks.len());
    if let Some(path) = &opts.checkpoint {
        if let Some(old) = Checkpoint::load(path)? {
            if old.experiment != opts.experiment || old.config_hash != opts.config_hash || old.chunks != chunks.len() {
                return Err(CliError::Usage(format!(
                    "checkpoint {} belongs to a different configuration",
                    path.display()
                )));
            }
            cp = old;
        }
    }
    let todo: Vec<usize> = (0..chunks.len()).filter(|i| !cp.done.contains_key(i)).collect();
    if opts.verbose && todo.len() < chunks.len() {
        eprintln!(
            "resuming: {} of {} chunks already done",
            chunks.len() - todo.len(),
            chunks.len()
        );
    }
    let ranges: Vec<(u64, u64)> = chunks.iter().map(|c| (c.lo, c.hi)).collect();
    let mut completed = 0usize;
    execute(
        &todo,
        opts.threads,
        &ranges,
        |i| worker(&chunks[i]),
        |i, v: &Vec<BigRational>| {
            cp.done.insert(i, v.clone());
            completed += 1;
            if opts.verbose {
                let c = chunks[i];
                eprintln!(
                    "chunk {i} [{}, {}) done ({}/{})",
                    c.lo,
                    c.hi,
                    cp.done.len(),
                    chunks.len()
                );
            }
            if let Some(path) = &opts.checkpoint {
                cp.save(path)?;
            }
            if opts.halt_after == Some(completed) {
                eprintln!("halting after {completed} chunks");
                std::process::abort();
            }
            Ok(())
        },
    )?;
    Ok((0..chunks.len()).map(|i| cp.done[&i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_edges() {
        assert!(partition(5..5, 3).is_empty());
        assert_eq!(partition(0..7, 3), vec![0..3, 3..6, 6..7]);
        assert_eq!(partition(0..2, 10), vec![0..2]);
        let c = segmented_chunks(1, &[5, 5, 9], 3);
        assert_eq!(
            c,
            vec![
                Chunk { tag: 0, lo: 1, hi: 4 },
                Chunk { tag: 0, lo: 4, hi: 5 },
                Chunk { tag: 2, lo: 5, hi: 8 },
                Chunk { tag: 2, lo: 8, hi: 9 },
            ]
        );
    }

    #[test]
    fn reduction_is_ordered_and_thread_independent() {
        let concat = |threads| {
            partition_and_reduce(
                0..100,
                7,
                threads,
                String::new(),
                |r| Ok(format!("{},", r.start)),
                |a, b| a + &b,
            )
            .unwrap()
        };
        assert_eq!(concat(1), concat(8));
        assert!(concat(3).starts_with("0,7,14,"));
        let empty = partition_and_reduce(0..0, 7, 4, 42u64, |_| Ok(1), |a, b| a + b).unwrap();
        assert_eq!(empty, 42);
    }

    #[test]
    fn single_chunk_matches_direct() {
        let direct: u64 = (0..50u64).map(|x| x * x).sum();
        let v = partition_and_reduce(0..50, 1000, 2, 0u64, |r| Ok(r.map(|x| x * x).sum()), |a, b| a + b).unwrap();
        assert_eq!(v, direct);
    }

    #[test]
    fn failing_chunk_is_identified() {
        let err = partition_and_reduce(
            0..100,
            10,
            4,
            0u64,
            |r| if r.start == 30 { Err("boom".into()) } else { Ok(1) },
            |a, b| a + b,
        )
        .unwrap_err();
        match err {
            CliError::Chunk { index, lo, hi, .. } => assert_eq!((index, lo, hi), (3, 30, 40)),
            e => panic!("{e}"),
        }
        let err = partition_and_reduce(
            0..20,
            10,
            1,
            0u64,
            |r| if r.start == 10 { panic!("bad") } else { Ok(1) },
            |a, b| a + b,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn checkpoint_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cp");
        let chunks = segmented_chunks(0, &[30], 10);
        let opts = RunOptions {
            threads: 2,
            checkpoint: Some(path.clone()),
            experiment: "t".into(),
            config_hash: "h".into(),
            ..Default::default()
        };
        let f = |c: &Chunk| Ok(vec![BigRational::from_integer((c.lo as i64).into())]);
        let first = run_chunks(&chunks, &opts, f).unwrap();
        // A second run finds every chunk done and recomputes nothing.
        let second = run_chunks(&chunks, &opts, |_: &Chunk| Err("recomputed".into())).unwrap();
        assert_eq!(first, second);
        let other = RunOptions {
            config_hash: "other".into(),
            ..opts.clone()
        };
        assert!(matches!(run_chunks(&chunks, &other, f), Err(CliError::Usage(_))));
    }
}
