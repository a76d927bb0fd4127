//! Write a simulated panel in the tab-separated formats and read it back.

use admixlink::io::{
    load_frequencies, load_genotypes, load_map, write_frequencies, write_genotypes, write_map,
    FrequencyTable, Layout, MapTable, PanelDataset,
};
use admixlink::simulate::{simulate_panel, SimulationConfig};
use admixlink::Ploidy;

fn main() -> admixlink::Result<()> {
    let config = SimulationConfig {
        marker_counts: vec![4, 3],
        ploidy: Ploidy::PhasedDiploid,
        seed: 5,
        ..Default::default()
    };
    let sims = simulate_panel(&config, 2, None)?;
    let layout = Layout::numbered(&config.marker_counts);
    let dir = std::env::temp_dir().join("admixlink-example");
    std::fs::create_dir_all(&dir)?;

    let panel = PanelDataset::new(
        vec!["alice".into(), "bob".into()],
        sims.iter().map(|s| s.data.clone()).collect(),
        layout.clone(),
    )?;
    write_genotypes(&panel, std::fs::File::create(dir.join("genotypes.tsv"))?)?;
    let freqs = FrequencyTable {
        layout: layout.clone(),
        populations: vec!["north".into(), "south".into()],
        freqs: sims[0].freqs.clone(),
    };
    write_frequencies(&freqs, std::fs::File::create(dir.join("freqs.tsv"))?)?;
    let map = MapTable {
        layout,
        map: sims[0].map.clone(),
    };
    write_map(&map, std::fs::File::create(dir.join("map.tsv"))?)?;

    print!("{}", std::fs::read_to_string(dir.join("genotypes.tsv"))?);
    assert_eq!(load_genotypes(&dir.join("genotypes.tsv"))?, panel);
    assert_eq!(load_frequencies(&dir.join("freqs.tsv"))?, freqs);
    assert_eq!(load_map(&dir.join("map.tsv"))?, map);
    println!("files in {} read back unchanged", dir.display());
    Ok(())
}
