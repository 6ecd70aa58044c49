use std::fs;
use std::path::Path;

use soiling::campaign_io::{load_campaign, load_weather, write_campaign, SiteConfig};
use soiling::Error;

const WEATHER: &str = "\
timestamp,wind_speed_m_s,air_temp_c,dust_ug_m3,dust_kind
2021-03-01T00:00:00,1.5,20.0,30.0,pm10
2021-03-01T01:00:00,2.5,19.0,35.0,pm10
2021-03-01T02:00:00,3.0,18.5,40.0,pm10
2021-03-01T03:00:00,2.0,18.0,20.0,pm10
2021-03-01T04:00:00,0.5,17.5,25.0,pm10
2021-03-01T05:00:00,0.0,17.0,28.0,pm10
";

const REFLECTANCE: &str = "\
timestamp,mirror_id,tilt_deg,mean_r,sigma_mean,n_pos
2021-03-01T00:00:00,M0,0.0,0.950,0.001,9
2021-03-01T00:00:00,M30,30.0,0.951,0.001,9
2021-03-01T03:00:00,M0,0.0,0.946,0.001,9
2021-03-01T03:00:00,M30,30.0,0.949,0.001,9
2021-03-01T05:00:00,M0,0.0,0.944,0.001,9
2021-03-01T05:00:00,M30,30.0,0.948,0.002,9
";

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn written_campaign_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    let site = SiteConfig::default();
    let c = load_campaign(
        &write(dir.path(), "w.csv", WEATHER),
        &write(dir.path(), "r.csv", REFLECTANCE),
        &site,
    )
    .unwrap();
    assert_eq!(c.slots.len(), 6);
    assert_eq!(c.dt_s, 3600.0);
    assert_eq!(c.mirrors.len(), 2);
    assert_eq!(c.reflectance.len(), 6);

    let (w2, r2) = (dir.path().join("w2.csv"), dir.path().join("r2.csv"));
    write_campaign(&c, &w2, &r2).unwrap();
    let mut back = load_campaign(&w2, &r2, &site).unwrap();
    back.label = c.label.clone();
    assert_eq!(back, c);
}

#[test]
fn row_order_does_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let site = SiteConfig::default();
    let mut lines: Vec<&str> = WEATHER.lines().collect();
    let header = lines.remove(0);
    lines.reverse();
    let shuffled = format!("{header}\n{}\n", lines.join("\n"));
    let a = load_weather(&write(dir.path(), "a.csv", WEATHER), &site).unwrap();
    let mut b = load_weather(&write(dir.path(), "b.csv", &shuffled), &site).unwrap();
    b.label = a.label.clone();
    assert_eq!(a, b);
}

#[test]
fn celsius_and_kelvin_columns_agree() {
    let dir = tempfile::tempdir().unwrap();
    let site = SiteConfig::default();
    let kelvin: String = WEATHER
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                return l.replace("air_temp_c", "air_temp_k") + "\n";
            }
            let mut f: Vec<String> = l.split(',').map(str::to_string).collect();
            f[2] = (f[2].parse::<f64>().unwrap() + 273.15).to_string();
            f.join(",") + "\n"
        })
        .collect();
    let a = load_weather(&write(dir.path(), "c.csv", WEATHER), &site).unwrap();
    let b = load_weather(&write(dir.path(), "k.csv", &kelvin), &site).unwrap();
    for (x, y) in a.slots.iter().zip(&b.slots) {
        let (x, y) = (x.unwrap(), y.unwrap());
        assert!((x.air_temp_k - y.air_temp_k).abs() < 1e-9);
    }
}

#[test]
fn missing_dust_column_names_the_column() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = WEATHER
        .lines()
        .map(|l| l.rsplitn(3, ',').nth(2).unwrap().to_string() + "\n")
        .collect();
    let err = load_weather(&write(dir.path(), "w.csv", &text), &SiteConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    assert!(err.to_string().contains("dust_ug_m3"));
}

#[test]
fn kmh_wind_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = WEATHER.replace("wind_speed_m_s", "wind_speed_km_h");
    let err = load_weather(&write(dir.path(), "w.csv", &text), &SiteConfig::default()).unwrap_err();
    assert!(err.to_string().contains("unit mismatch"), "{err}");
}

#[test]
fn fahrenheit_values_in_a_celsius_column_are_implausible() {
    let dir = tempfile::tempdir().unwrap();
    let text = WEATHER.replace(",20.0,30.0,", ",120.0,30.0,");
    let err = load_weather(&write(dir.path(), "w.csv", &text), &SiteConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
}

#[test]
fn percent_reflectance_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = REFLECTANCE.replace("0.946", "94.6");
    let err = load_campaign(
        &write(dir.path(), "w.csv", WEATHER),
        &write(dir.path(), "r.csv", &text),
        &SiteConfig::default(),
    )
    .unwrap_err();
    assert!(err.to_string().contains("94.6"), "{err}");
}

#[test]
fn single_missing_hour_is_filled_but_longer_gaps_remain() {
    let dir = tempfile::tempdir().unwrap();
    let site = SiteConfig::default();
    let one: String = WEATHER.lines().filter(|l| !l.contains("T02:")).map(|l| format!("{l}\n")).collect();
    let c = load_weather(&write(dir.path(), "one.csv", &one), &site).unwrap();
    assert!(c.gaps().is_empty());
    let w = c.slots[2].unwrap();
    assert!((w.wind_speed_m_s - 2.25).abs() < 1e-12);

    let two: String = WEATHER
        .lines()
        .filter(|l| !l.contains("T02:") && !l.contains("T03:"))
        .map(|l| format!("{l}\n"))
        .collect();
    let c = load_weather(&write(dir.path(), "two.csv", &two), &site).unwrap();
    assert_eq!(c.gaps().len(), 2);
}
