use std::path::PathBuf;

use gad_core::experiments::{parse_delimited, DatasetSchema, Task};

fn schema(name: &str) -> DatasetSchema {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../datasets")
        .join(format!("{name}.toml"));
    DatasetSchema::from_file(&path).unwrap()
}

#[test]
fn shipped_schemas_parse_sample_rows() {
    let cases = [
        ("magic_gamma", "28.7967,16.0021,2.6449,0.3918,0.1982,27.7004,22.011,-8.2027,40.092,81.8828,g\n31.6036,11.7235,2.5185,0.5303,0.3773,26.2722,23.8238,-9.9574,6.3609,205.261,h\n", 10),
        ("pima", "6,148,72,35,0,33.6,0.627,50,1\n1,85,66,29,0,26.6,0.351,31,0\n", 8),
        ("abalone_classification", "M,0.455,0.365,0.095,0.514,0.2245,0.101,0.15,15\nM,0.35,0.265,0.09,0.2255,0.0995,0.0485,0.07,7\n", 7),
        ("abalone_regression", "M,0.455,0.365,0.095,0.514,0.2245,0.101,0.15,15\nM,0.35,0.265,0.09,0.2255,0.0995,0.0485,0.07,7\n", 7),
        ("parkinsons", "subject#,age,sex,test_time,motor_UPDRS,total_UPDRS,Jitter(%),Jitter(Abs),Jitter:RAP,Jitter:PPQ5,Jitter:DDP,Shimmer,Shimmer(dB),Shimmer:APQ3,Shimmer:APQ5,Shimmer:APQ11,Shimmer:DDA,NHR,HNR,RPDE,DFA,PPE\n1,72,0,5.6431,28.199,34.398,0.00662,3.38e-05,0.00401,0.00317,0.01204,0.02565,0.23,0.01438,0.01309,0.01662,0.04314,0.01429,21.64,0.41888,0.54842,0.16006\n", 20),
        ("wine_quality", "\"fixed acidity\";\"volatile acidity\";\"citric acid\";\"residual sugar\";\"chlorides\";\"free sulfur dioxide\";\"total sulfur dioxide\";\"density\";\"pH\";\"sulphates\";\"alcohol\";\"quality\"\n7.4;0.7;0;1.9;0.076;11;34;0.9978;3.51;0.56;9.4;5\n", 11),
    ];
    for (name, text, dim) in cases {
        let ds = parse_delimited(text, &schema(name)).unwrap();
        assert_eq!(ds.dim(), dim, "{name}");
        assert_eq!(ds.dropped_rows, 0, "{name}");
    }
    let magic = parse_delimited(cases[0].1, &schema("magic_gamma")).unwrap();
    assert_eq!(magic.task, Task::BinaryClassification);
    assert_eq!(magic.targets, vec![-1.0, 1.0]);
    let abalone = parse_delimited(cases[2].1, &schema("abalone_classification")).unwrap();
    assert_eq!(abalone.targets, vec![1.0, -1.0]);
}
