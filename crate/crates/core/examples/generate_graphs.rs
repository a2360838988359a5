use nar_astar::dataset::{build_split, decode_split, encode_split, SplitSpec};
use nar_astar::graph::{generate_graph, sample_instance, DistributionConfig, Family};

fn main() {
    for family in Family::ALL {
        let config = DistributionConfig::for_family(family, 64, 7);
        let graph = generate_graph(&config).unwrap();
        let p = config.edge_probability.resolve(64);
        let components = graph.components();
        let largest = {
            let mut sizes = vec![0; graph.node_count()];
            for &c in &components {
                sizes[c] += 1;
            }
            sizes.into_iter().max().unwrap()
        };
        let instance = sample_instance(&graph, 7).unwrap();
        println!(
            "{family:<10} p={p:.3} edges={:>4} mean degree {:>5.1} largest component {largest:>2}  s={} t={}",
            graph.edge_count(),
            2.0 * graph.edge_count() as f64 / 64.0,
            instance.source,
            instance.target,
        );
    }

    // Splits are pure functions of (spec, master seed) and survive the binary format.
    let split = build_split(&SplitSpec::new("demo", Family::Sparse, 32, 20), 42).unwrap();
    let bytes = encode_split(&split);
    let back = decode_split(&bytes, "demo.nards".as_ref()).unwrap();
    assert_eq!(back.instances, split.instances);
    assert_eq!(
        build_split(&SplitSpec::new("demo", Family::Sparse, 32, 20), 42)
            .unwrap()
            .instances,
        split.instances
    );
    println!(
        "split `demo`: {} instances, {} bytes, seed {:#018x}",
        split.instances.len(),
        bytes.len(),
        split.header.split_seed
    );
}
