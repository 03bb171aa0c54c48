//! Every example runs to completion; each asserts its own outcome.

macro_rules! example {
    ($name:ident) => {
        mod $name {
            include!(concat!("../examples/", stringify!($name), ".rs"));

            #[test]
            fn runs() {
                main();
            }
        }
    };
}

example!(cas_splice);
example!(consensus_cells);
example!(custom_spec);
example!(explore_small);
example!(linearizability);
example!(passive_helping);
example!(stale_last);
example!(stress);
example!(universal_queue);
