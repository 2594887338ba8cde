//! Builds the benchmark domains, prints their decompositions, and writes one
//! as a JSON document that `halmdp --env-file` can read back.

use halmdp::envs::{build_nroom, build_taxi, two_room_corridor, NRoomSpec, TaxiSpec};
use halmdp::format::{write_json, AlmdpDocument, EnvironmentDocument, PartitionDocument};

fn main() -> halmdp::Result<()> {
    let envs = [
        two_room_corridor(1.0)?,
        build_nroom(&NRoomSpec::row(2, 5))?,
        build_nroom(&NRoomSpec::square(2, 5))?,
        build_nroom(&NRoomSpec::square(3, 4))?,
        build_taxi(&TaxiSpec::default())?,
        build_taxi(&TaxiSpec::with_grid(8))?,
    ];
    for env in &envs {
        let d = env.decomposition()?;
        println!(
            "{:<20} states {:>5}  blocks {:>3}  s* {:<12} {}",
            env.name,
            env.almdp.n_states(),
            env.partition.n_blocks(),
            env.almdp.labels()[d.reference_state()],
            d.representation_size()
        );
    }
    let env = &envs[2];
    let doc = EnvironmentDocument {
        name: env.name.clone(),
        almdp: AlmdpDocument::from_almdp(&env.almdp),
        partition: Some(PartitionDocument::from_parts(&env.almdp, &env.partition, Some(&env.class_declarations))),
        start: Some(env.almdp.labels()[env.restart_state].clone()),
    };
    let path = std::env::temp_dir().join("four_room.json");
    write_json(&path, &doc)?;
    println!("wrote {}", path.display());
    Ok(())
}
