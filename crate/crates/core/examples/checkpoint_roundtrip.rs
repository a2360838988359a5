use nar_astar::eval::checkpoint_id;
use nar_astar::graph::{generate_graph, sample_instance, DistributionConfig, Family};
use nar_astar::model::{infer_heuristic, ModelConfig, ModelParameters};

fn main() {
    let params = ModelParameters::init(&ModelConfig {
        seed: 9,
        ..ModelConfig::default()
    })
    .unwrap();
    let dir = tempfile_dir();
    let path = dir.join("model.ckpt");
    params.save(&path).unwrap();
    let loaded = ModelParameters::load(&path).unwrap();
    println!(
        "{} parameters, {} bytes, id {}",
        params.store().parameter_count(),
        std::fs::metadata(&path).unwrap().len(),
        checkpoint_id(&params)
    );
    assert_eq!(checkpoint_id(&loaded), checkpoint_id(&params));
    assert_eq!(loaded.config(), params.config());

    let graph = generate_graph(&DistributionConfig::for_family(Family::VeryDense, 50, 1)).unwrap();
    let instance = sample_instance(&graph, 1).unwrap();
    assert_eq!(
        infer_heuristic(&instance, &loaded).unwrap(),
        infer_heuristic(&instance, &params).unwrap()
    );

    // A truncated file is refused.
    let bytes = std::fs::read(&path).unwrap();
    match ModelParameters::from_bytes(&bytes[..bytes.len() - 1]) {
        Ok(_) => panic!("corruption went unnoticed"),
        Err(e) => println!("truncated copy rejected: {e}"),
    }
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("checkpoint_roundtrip");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
