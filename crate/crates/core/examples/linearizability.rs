// The linearizability checker on hand-written histories: a witness order
// when one exists, the longest consistent prefix when none does.

use infinilog::checkers::{linearize, Linearization, OpRecord};
use infinilog::universal::{spec, Invocation, Response};

fn op(token: u64, name: &str, arg: Option<i64>, span: (u64, u64), response: Response) -> OpRecord {
    OpRecord {
        invocation: Invocation::new(token, name, arg),
        invoke: span.0,
        respond: Some(span.1),
        response: Some(response),
    }
}

fn main() {
    let queue = spec::queue();
    // Two overlapping enqueues; the dequeues decide their order.
    let ok = [
        op(0, "enq", Some(1), (0, 4), Response::Ok),
        op(1, "enq", Some(2), (1, 3), Response::Ok),
        op(2, "deq", None, (5, 6), Response::Value(2)),
        op(3, "deq", None, (7, 8), Response::Value(1)),
    ];
    match linearize(&ok, &queue, queue.initial()).expect("small") {
        Linearization::Witness(order) => println!("linearizable, order {order:?}"),
        Linearization::Conflict { .. } => unreachable!(),
    }

    // The second enqueue starts after the first returned, so 1 must come out first.
    let bad = [
        op(0, "enq", Some(1), (0, 1), Response::Ok),
        op(1, "enq", Some(2), (2, 3), Response::Ok),
        op(2, "deq", None, (4, 5), Response::Value(2)),
    ];
    match linearize(&bad, &queue, queue.initial()).expect("small") {
        Linearization::Witness(_) => unreachable!(),
        Linearization::Conflict { prefix, blocked } => {
            println!("not linearizable; longest prefix {prefix:?}, then {blocked:?}")
        }
    }
}
