// A wait-free queue from the universal construction, first simulated and
// checked for linearizability, then shared by real threads.

use std::sync::Arc;
use std::thread;

use infinilog::checkers::check_history;
use infinilog::harness::{run, Algorithm, RunConfig};
use infinilog::substrate::{block_on, native::NativeMemory};
use infinilog::universal::{spec, Invocation, Universal};

fn main() {
    let config = RunConfig::new(Algorithm::Universal("queue".into()), 3)
        .ops_per_proc(3)
        .seed(11);
    let history = run(&config).expect("valid config");
    for op in history.operations() {
        let r = op
            .respond
            .map_or("(none)".to_string(), |r| r.out.to_string());
        println!("p{} {} -> {r}", op.pid, op.invoke.input);
    }
    let verdict = check_history(&history).expect("well-formed history");
    print!("{verdict}");
    assert!(verdict.passed());

    let queue = Arc::new(
        Universal::over_cas_log(NativeMemory::new(), Arc::new(spec::queue())).expect("allocates"),
    );
    thread::scope(|s| {
        for t in 0..4u64 {
            let queue = queue.clone();
            s.spawn(move || {
                for k in 0..25 {
                    let token = t * 100 + k;
                    block_on(queue.apply(Invocation::new(token, "enq", Some(token as i64))))
                        .expect("no corruption");
                }
            });
        }
    });
    let head = block_on(queue.apply(Invocation::new(10_000, "deq", None))).expect("no corruption");
    println!("100 concurrent enqueues, then deq -> {head:?}");
    println!(
        "decided chain length {}",
        queue.decided_chain().expect("acyclic").len()
    );
}
