//! Tab-separated input formats and CSV outputs.
//!
//! ```text
//! frequencies   chrom  marker  pop1 .. popK      one row per marker
//! map           chrom  marker  dist_cM           first marker of a chromosome: 0, ignored
//! genotypes     id     chrom   marker  hap1 [hap2]   alleles 0, 1 or '.'
//! labels        id     population
//! ```
//!
//! Markers are grouped by chromosome in file order; chromosome and marker
//! names are kept so files can be cross-checked and written back unchanged.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Allele, AlleleFrequencySet, GeneticMap, GenotypeData, DEFAULT_FREQ_BOUND};

/// Chromosome and marker names, in file order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Layout {
    pub chromosomes: Vec<(String, Vec<String>)>,
}

impl Layout {
    pub fn marker_counts(&self) -> Vec<usize> {
        self.chromosomes.iter().map(|(_, m)| m.len()).collect()
    }

    fn push(&mut self, chrom: &str, marker: &str, source: &str, line: usize) -> Result<(usize, usize)> {
        match self.chromosomes.last_mut() {
            Some((name, markers)) if name == chrom => {
                markers.push(marker.to_string());
                Ok((self.chromosomes.len() - 1, self.chromosomes.last().unwrap().1.len() - 1))
            }
            _ => {
                if self.chromosomes.iter().any(|(n, _)| n == chrom) {
                    return Err(parse_error(
                        source,
                        line,
                        format!("chromosome {chrom} reappears after other chromosomes"),
                    ));
                }
                self.chromosomes.push((chrom.to_string(), vec![marker.to_string()]));
                Ok((self.chromosomes.len() - 1, 0))
            }
        }
    }

    /// Synthetic names `1..C` and `1..M_c`.
    pub fn numbered(marker_counts: &[usize]) -> Self {
        Self {
            chromosomes: marker_counts
                .iter()
                .enumerate()
                .map(|(c, &m)| ((c + 1).to_string(), (1..=m).map(|i| i.to_string()).collect()))
                .collect(),
        }
    }

    pub fn ensure_same(&self, other: &Layout, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Structural(format!("{what} list different chromosomes or markers")))
        }
    }
}

fn parse_error(source: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Header plus data rows with their 1-based line numbers. Blank lines and `#` comments are skipped.
fn read_table<R: Read>(reader: R, source: &str) -> Result<(Vec<String>, Vec<(usize, Vec<String>)>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut header = None;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(source, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<String> = rec.iter().map(|f| f.trim().to_string()).collect();
        if fields.iter().all(String::is_empty) {
            continue;
        }
        if header.is_none() {
            header = Some(fields);
        } else {
            rows.push((line, fields));
        }
    }
    let header = header.ok_or_else(|| parse_error(source, 1, "file is empty"))?;
    Ok((header, rows))
}

fn expect_columns(fields: &[String], n: usize, source: &str, line: usize) -> Result<()> {
    if fields.len() != n {
        return Err(parse_error(
            source,
            line,
            format!("expected {n} columns, found {}", fields.len()),
        ));
    }
    Ok(())
}

fn parse_f64(s: &str, source: &str, line: usize, what: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| parse_error(source, line, format!("{what} {s:?} is not a number")))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    pub layout: Layout,
    pub populations: Vec<String>,
    pub freqs: AlleleFrequencySet,
}

pub fn read_frequencies<R: Read>(reader: R, source: &str) -> Result<FrequencyTable> {
    let (header, rows) = read_table(reader, source)?;
    if header.len() < 4 || header[0] != "chrom" || header[1] != "marker" {
        return Err(parse_error(
            source,
            1,
            "header must be: chrom, marker, and at least two population columns",
        ));
    }
    let populations = header[2..].to_vec();
    let mut layout = Layout::default();
    let mut chroms: Vec<Vec<Vec<f64>>> = Vec::new();
    for (line, fields) in rows {
        expect_columns(&fields, header.len(), source, line)?;
        let (c, _) = layout.push(&fields[0], &fields[1], source, line)?;
        let row = fields[2..]
            .iter()
            .map(|v| {
                let p = parse_f64(v, source, line, "frequency")?;
                if (0.0..=1.0).contains(&p) {
                    Ok(p)
                } else {
                    Err(parse_error(source, line, format!("frequency {p} is outside [0, 1]")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if c == chroms.len() {
            chroms.push(Vec::new());
        }
        chroms[c].push(row);
    }
    if chroms.is_empty() {
        return Err(parse_error(source, 1, "no markers"));
    }
    Ok(FrequencyTable {
        layout,
        populations,
        freqs: AlleleFrequencySet::new(chroms)?,
    })
}

pub fn load_frequencies(path: &Path) -> Result<FrequencyTable> {
    read_frequencies(open(path)?, &path.display().to_string())
}

pub fn write_frequencies<W: Write>(table: &FrequencyTable, mut out: W) -> Result<()> {
    write!(out, "chrom\tmarker")?;
    for p in &table.populations {
        write!(out, "\t{p}")?;
    }
    writeln!(out)?;
    for (c, (chrom, markers)) in table.layout.chromosomes.iter().enumerate() {
        for (m, marker) in markers.iter().enumerate() {
            write!(out, "{chrom}\t{marker}")?;
            for p in table.freqs.column(c, m) {
                write!(out, "\t{p}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapTable {
    pub layout: Layout,
    pub map: GeneticMap,
}

pub fn read_map<R: Read>(reader: R, source: &str) -> Result<MapTable> {
    let (header, rows) = read_table(reader, source)?;
    if header != ["chrom", "marker", "dist_cM"] {
        return Err(parse_error(source, 1, "header must be: chrom, marker, dist_cM"));
    }
    let mut layout = Layout::default();
    let mut chroms: Vec<Vec<f64>> = Vec::new();
    for (line, fields) in rows {
        expect_columns(&fields, 3, source, line)?;
        let (c, m) = layout.push(&fields[0], &fields[1], source, line)?;
        let d = parse_f64(&fields[2], source, line, "distance")?;
        if !(d.is_finite() && d >= 0.0) {
            return Err(parse_error(source, line, format!("distance {d} is negative")));
        }
        if c == chroms.len() {
            chroms.push(Vec::new());
        }
        chroms[c].push(if m == 0 { 0.0 } else { d });
    }
    if chroms.is_empty() {
        return Err(parse_error(source, 1, "no markers"));
    }
    Ok(MapTable {
        layout,
        map: GeneticMap::new(chroms)?,
    })
}

pub fn load_map(path: &Path) -> Result<MapTable> {
    read_map(open(path)?, &path.display().to_string())
}

pub fn write_map<W: Write>(table: &MapTable, mut out: W) -> Result<()> {
    writeln!(out, "chrom\tmarker\tdist_cM")?;
    for (c, (chrom, markers)) in table.layout.chromosomes.iter().enumerate() {
        for (m, marker) in markers.iter().enumerate() {
            writeln!(out, "{chrom}\t{marker}\t{}", table.map.chromosome(c)[m])?;
        }
    }
    Ok(())
}

/// Genotypes of several individuals on one marker layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub ids: Vec<String>,
    pub individuals: Vec<GenotypeData>,
    pub layout: Layout,
}

impl PanelDataset {
    pub fn new(ids: Vec<String>, individuals: Vec<GenotypeData>, layout: Layout) -> Result<Self> {
        if ids.len() != individuals.len() {
            return Err(Error::Structural("one identifier per individual is required".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::InvalidInput(format!("duplicate individual identifier {dup}")));
        }
        for (id, ind) in ids.iter().zip(&individuals) {
            if ind.marker_counts() != layout.marker_counts() {
                return Err(Error::Structural(format!("individual {id} does not match the marker layout")));
            }
        }
        Ok(Self {
            ids,
            individuals,
            layout,
        })
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }
}

fn parse_allele(token: &str, source: &str, line: usize) -> Result<Allele> {
    match token {
        "0" => Ok(Allele::Zero),
        "1" => Ok(Allele::One),
        "." => Ok(Allele::Missing),
        other => Err(parse_error(source, line, format!("allele {other:?} is not 0, 1 or '.'"))),
    }
}

fn allele_token(a: Allele) -> &'static str {
    match a {
        Allele::Zero => "0",
        Allele::One => "1",
        Allele::Missing => ".",
    }
}

pub fn read_genotypes<R: Read>(reader: R, source: &str) -> Result<PanelDataset> {
    let (header, rows) = read_table(reader, source)?;
    let n_tracks = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["id", "chrom", "marker", "hap1"] => 1,
        ["id", "chrom", "marker", "hap1", "hap2"] => 2,
        _ => {
            return Err(parse_error(
                source,
                1,
                "header must be: id, chrom, marker, hap1 [, hap2]",
            ))
        }
    };
    let mut order: Vec<String> = Vec::new();
    let mut per_id: HashMap<String, (Layout, Vec<Vec<Vec<Allele>>>)> = HashMap::new();
    for (line, fields) in rows {
        expect_columns(&fields, 3 + n_tracks, source, line)?;
        let id = &fields[0];
        let entry = per_id.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (Layout::default(), vec![Vec::new(); n_tracks])
        });
        let (c, _) = entry.0.push(&fields[1], &fields[2], source, line)?;
        for (h, track) in entry.1.iter_mut().enumerate() {
            if c == track.len() {
                track.push(Vec::new());
            }
            track[c].push(parse_allele(&fields[3 + h], source, line)?);
        }
    }
    let first = order
        .first()
        .ok_or_else(|| parse_error(source, 1, "no genotype rows"))?;
    let layout = per_id[first].0.clone();
    let mut individuals = Vec::with_capacity(order.len());
    for id in &order {
        let (l, tracks) = per_id.remove(id).expect("id recorded");
        if l != layout {
            return Err(Error::Structural(format!(
                "individual {id} lists different markers than individual {first}"
            )));
        }
        individuals.push(GenotypeData::new(tracks)?);
    }
    PanelDataset::new(order, individuals, layout)
}

pub fn load_genotypes(path: &Path) -> Result<PanelDataset> {
    read_genotypes(open(path)?, &path.display().to_string())
}

pub fn write_genotypes<W: Write>(panel: &PanelDataset, mut out: W) -> Result<()> {
    let n_tracks = panel.individuals.first().map_or(1, |d| d.tracks().len());
    if n_tracks == 2 {
        writeln!(out, "id\tchrom\tmarker\thap1\thap2")?;
    } else {
        writeln!(out, "id\tchrom\tmarker\thap1")?;
    }
    for (id, ind) in panel.ids.iter().zip(&panel.individuals) {
        if ind.tracks().len() != n_tracks {
            return Err(Error::Structural("individuals differ in ploidy".into()));
        }
        for (c, (chrom, markers)) in panel.layout.chromosomes.iter().enumerate() {
            for (m, marker) in markers.iter().enumerate() {
                write!(out, "{id}\t{chrom}\t{marker}")?;
                for track in ind.tracks() {
                    write!(out, "\t{}", allele_token(track[c][m]))?;
                }
                writeln!(out)?;
            }
        }
    }
    Ok(())
}

/// Population membership of panel individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationLabels {
    /// Population names in order of first appearance.
    pub populations: Vec<String>,
    /// Population index per panel individual, `None` if unlabelled.
    pub of_individual: Vec<Option<usize>>,
}

pub fn read_labels<R: Read>(reader: R, source: &str, panel: &PanelDataset) -> Result<PopulationLabels> {
    let (header, rows) = read_table(reader, source)?;
    if header != ["id", "population"] {
        return Err(parse_error(source, 1, "header must be: id, population"));
    }
    let mut populations: Vec<String> = Vec::new();
    let mut of_individual = vec![None; panel.ids.len()];
    for (line, fields) in rows {
        expect_columns(&fields, 2, source, line)?;
        let Some(i) = panel.index_of(&fields[0]) else {
            continue;
        };
        let k = match populations.iter().position(|p| *p == fields[1]) {
            Some(k) => k,
            None => {
                populations.push(fields[1].clone());
                populations.len() - 1
            }
        };
        of_individual[i] = Some(k);
    }
    Ok(PopulationLabels {
        populations,
        of_individual,
    })
}

pub fn load_labels(path: &Path, panel: &PanelDataset) -> Result<PopulationLabels> {
    read_labels(open(path)?, &path.display().to_string(), panel)
}

impl PopulationLabels {
    /// Reorders populations to follow `names` (e.g. the columns of a frequency file).
    pub fn aligned_to(&self, names: &[String]) -> Result<Self> {
        let remap = self
            .populations
            .iter()
            .map(|p| {
                names
                    .iter()
                    .position(|n| n == p)
                    .ok_or_else(|| Error::Structural(format!("population {p} has no frequency column")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            populations: names.to_vec(),
            of_individual: self.of_individual.iter().map(|o| o.map(|k| remap[k])).collect(),
        })
    }
}

/// Allele-1 frequencies per labelled population computed from every haplotype in the
/// panel except those of individual `target`, clamped to `[κ, 1 − κ]` with the default κ.
///
/// Markers without any observed allele in a population get frequency 0.5.
pub fn leave_one_out_frequencies(
    panel: &PanelDataset,
    target: usize,
    labels: &PopulationLabels,
) -> Result<AlleleFrequencySet> {
    if target >= panel.individuals.len() {
        return Err(Error::InvalidInput(format!("individual index {target} not in panel")));
    }
    let k = labels.populations.len();
    let counts = panel.layout.marker_counts();
    // ones[c][m * k + pop], total[c][m * k + pop]
    let mut ones: Vec<Vec<u32>> = counts.iter().map(|&m| vec![0; m * k]).collect();
    let mut total: Vec<Vec<u32>> = ones.clone();
    let mut members = vec![0usize; k];
    for (i, ind) in panel.individuals.iter().enumerate() {
        let Some(pop) = labels.of_individual[i] else {
            continue;
        };
        if i == target {
            continue;
        }
        members[pop] += 1;
        for track in ind.tracks() {
            for (c, chrom) in track.iter().enumerate() {
                for (m, a) in chrom.iter().enumerate() {
                    match a {
                        Allele::One => {
                            ones[c][m * k + pop] += 1;
                            total[c][m * k + pop] += 1;
                        }
                        Allele::Zero => total[c][m * k + pop] += 1,
                        Allele::Missing => {}
                    }
                }
            }
        }
    }
    if let Some(empty) = members.iter().position(|n| *n == 0) {
        return Err(Error::InvalidInput(format!(
            "population {} has no individuals after leaving out {}",
            labels.populations[empty], panel.ids[target]
        )));
    }
    let chroms = counts
        .iter()
        .enumerate()
        .map(|(c, &mc)| {
            (0..mc)
                .map(|m| {
                    (0..k)
                        .map(|pop| {
                            let n = total[c][m * k + pop];
                            if n == 0 {
                                0.5
                            } else {
                                ones[c][m * k + pop] as f64 / n as f64
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    AlleleFrequencySet::with_bounds(chroms, DEFAULT_FREQ_BOUND, 1.0 - DEFAULT_FREQ_BOUND)
}

/// One line of a test results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub id: String,
    pub ell_null: f64,
    pub ell_alt: f64,
    pub lambda: f64,
    pub p_value: f64,
    pub reject: bool,
    pub q_hat: Vec<f64>,
    pub r_hat: crate::model::Recombination,
    pub boundary: bool,
}

impl ResultRow {
    pub fn from_test(id: &str, t: &crate::lrt::TestResult) -> Self {
        Self {
            id: id.to_string(),
            ell_null: t.null_fit.ell_hat,
            ell_alt: t.alt_fit.ell_hat,
            lambda: t.lambda,
            p_value: t.p_value,
            reject: t.reject,
            q_hat: t.alt_fit.theta_hat.q.clone(),
            r_hat: t.alt_fit.theta_hat.r,
            boundary: t.alt_fit.is_boundary(),
        }
    }
}

/// Column names of a results table for `k` populations.
pub fn result_header(k: usize) -> Vec<String> {
    let mut h: Vec<String> = ["id", "ell_null", "ell_alt", "lambda", "p_value", "reject"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=k).map(|i| format!("q_hat_{i}")));
    h.push("r_hat".into());
    h.push("boundary_flag".into());
    h
}

pub fn write_results<W: Write>(rows: &[ResultRow], k: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(result_header(k))?;
    for row in rows {
        let mut rec = vec![
            row.id.clone(),
            row.ell_null.to_string(),
            row.ell_alt.to_string(),
            row.lambda.to_string(),
            row.p_value.to_string(),
            row.reject.to_string(),
        ];
        rec.extend(row.q_hat.iter().map(f64::to_string));
        rec.push(row.r_hat.to_string());
        rec.push(row.boundary.to_string());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Square matrix with a header row and a label column.
pub fn write_labeled_matrix<W: Write>(labels: &[String], m: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![String::new()];
    header.extend(labels.iter().cloned());
    w.write_record(header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend((0..m.ncols()).map(|j| m[(i, j)].to_string()));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Non-rejection fractions overall and per population.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSummary {
    pub tested: usize,
    pub rejected: usize,
    pub non_rejection_fraction: f64,
    /// `(population, tested, rejected, non-rejection fraction)`; unlabelled individuals are grouped as "unlabelled".
    pub per_population: Vec<(String, usize, usize, f64)>,
}

pub fn summarize_panel(rejects: &[bool], labels: Option<&PopulationLabels>) -> PanelSummary {
    let tested = rejects.len();
    let rejected = rejects.iter().filter(|r| **r).count();
    let frac = |n: usize, rej: usize| if n == 0 { 0.0 } else { (n - rej) as f64 / n as f64 };
    let mut per_population = Vec::new();
    if let Some(labels) = labels {
        let mut groups: Vec<(String, usize, usize)> =
            labels.populations.iter().map(|p| (p.clone(), 0, 0)).collect();
        let mut unlabelled = (0, 0);
        for (i, r) in rejects.iter().enumerate() {
            let (n, rej) = match labels.of_individual.get(i).copied().flatten() {
                Some(k) => {
                    let g = &mut groups[k];
                    (&mut g.1, &mut g.2)
                }
                None => (&mut unlabelled.0, &mut unlabelled.1),
            };
            *n += 1;
            *rej += usize::from(*r);
        }
        per_population = groups
            .into_iter()
            .filter(|g| g.1 > 0)
            .map(|(p, n, rej)| (p, n, rej, frac(n, rej)))
            .collect();
        if unlabelled.0 > 0 {
            per_population.push(("unlabelled".into(), unlabelled.0, unlabelled.1, frac(unlabelled.0, unlabelled.1)));
        }
    }
    PanelSummary {
        tested,
        rejected,
        non_rejection_fraction: frac(tested, rejected),
        per_population,
    }
}

pub fn write_panel_summary<W: Write>(summary: &PanelSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["population", "tested", "rejected", "non_rejection_fraction"])?;
    w.write_record([
        "all".to_string(),
        summary.tested.to_string(),
        summary.rejected.to_string(),
        summary.non_rejection_fraction.to_string(),
    ])?;
    for (p, n, rej, f) in &summary.per_population {
        w.write_record([p.clone(), n.to_string(), rej.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
