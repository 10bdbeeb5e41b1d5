macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!("../examples/", stringify!($name), ".rs"));
        }

        #[test]
        fn $name() {
            $name::run_example().unwrap();
        }
    };
}

example!(oracle_walkthrough);
example!(swap_non_projective);
example!(dynamic_oracle_loss);
example!(treebank_io);
example!(synthetic_corpus);
example!(supervised_training);
example!(policy_gradient);
example!(error_propagation);
