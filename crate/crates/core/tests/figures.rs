//! The two worked executions, replayed step by step with scripted schedules.
//! Process `p_i` appends `v_i`, which carries token `i - 1`.

use infinilog::checkers::{check_history, precedence_order};
use infinilog::harness::{run, Algorithm, History, RunConfig, ScriptStep, Strategy};
use infinilog::weaklog::{Snapshot, Token};

fn returned(h: &History, pid: usize) -> Vec<u64> {
    let op = h
        .operations()
        .into_iter()
        .find(|o| o.pid == pid)
        .expect("process invoked");
    serde_json::from_value(op.respond.expect("append returned").out.clone()).unwrap()
}

fn snapshot(h: &History) -> Snapshot {
    serde_json::from_value(h.outcome.snapshot.clone()).unwrap()
}

fn tokens(ts: &[u64]) -> Vec<Token> {
    ts.iter().map(|&t| Token(t)).collect()
}

fn scripted(algo: Algorithm, procs: usize, script: Vec<ScriptStep>) -> History {
    run(&RunConfig::new(algo, procs).strategy(Strategy::Scripted { script })).unwrap()
}

#[test]
fn consensus_log_passive_helping() {
    use ScriptStep as S;
    let h = scripted(
        Algorithm::WeaklogCons,
        6,
        vec![
            S::finish(0),
            // p2 and p3 read the same `last`; p2 wins the spine, p3 joins its side list.
            S::run(1, 1),
            S::run(2, 1),
            S::run(1, 1),
            S::run(2, 1),
            S::finish(1),
            S::finish(2),
            S::finish(3),
            // Same again for p5 and p6.
            S::run(4, 1),
            S::run(5, 1),
            S::run(4, 1),
            S::run(5, 1),
            S::finish(4),
            S::finish(5),
        ],
    );
    let Snapshot::Spine { lists, .. } = snapshot(&h) else {
        panic!("not a spine")
    };
    let shape: Vec<Vec<Token>> = lists.into_iter().map(|l| l.values).collect();
    assert_eq!(
        shape,
        vec![tokens(&[0]), tokens(&[1, 2]), tokens(&[3]), tokens(&[4, 5])]
    );
    assert_eq!(returned(&h, 5), vec![0, 1, 2, 3, 4, 5]);
    assert_eq!(returned(&h, 2), vec![0, 1, 2]);
    let v = check_history(&h).unwrap();
    assert!(v.passed(), "{v}");
    assert_eq!(v.counter("side-proposes"), 2);
}

#[test]
fn cas_log_loser_splices_below_the_node_it_read() {
    use ScriptStep as S;
    let h = scripted(
        Algorithm::WeaklogCas,
        5,
        vec![
            S::finish(0),
            S::finish(1),
            S::finish(2),
            // p4 and p5 both read the v3 node from `last`.
            S::run(3, 1),
            S::run(4, 1),
            S::finish(3),
            S::finish(4),
        ],
    );
    assert_eq!(returned(&h, 3), vec![0, 1, 2, 3]);
    // Printed-code semantics: after losing on `last`, p5 moves below v3.
    assert_eq!(returned(&h, 4), vec![0, 1, 4]);
    assert_eq!(
        snapshot(&h),
        Snapshot::Chain {
            nodes: tokens(&[3, 2, 4, 1, 0])
        }
    );
    assert_eq!(
        precedence_order(&snapshot(&h)).unwrap(),
        tokens(&[0, 1, 4, 2, 3])
    );
    let v = check_history(&h).unwrap();
    assert!(v.passed(), "{v}");
    assert_eq!(v.counter("cas-failures"), 1);
}
