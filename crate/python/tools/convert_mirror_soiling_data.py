"""Convert the public `mirror-soiling-data` workbooks into the CSV layout
read by `soiling`.

Usage:
    pip download mirror-soiling-data --no-deps -d /tmp/msd
    python -m zipfile -e /tmp/msd/mirror_soiling_data-*.whl /tmp/msd/x
    python python/tools/convert_mirror_soiling_data.py /tmp/msd/x/mirror_soiling_data data/campaigns

For every campaign workbook two files are written:

    <campaign>_weather.csv      timestamp, wind_speed_m_s, air_temp_c, dust_ug_m3, dust_kind
    <campaign>_reflectance.csv  timestamp, mirror_id, tilt_deg, mean_r, sigma_mean, n_pos

Reflectance is converted from percent to a fraction. The workbooks store the
sample standard deviation over the measured positions; it is converted to the
standard deviation of the mean with n_pos = 9.
"""

import math
import sys
from pathlib import Path

import pandas as pd

N_POS = 9
DUST_COLUMN = {
    "qut": ("TSP", "tsp"),
    "mount_isa": ("TSP", "tsp"),
    "wodonga": ("PM10", "pm10"),
}


def fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def convert(workbook: Path, site: str, out_dir: Path):
    sheets = pd.read_excel(workbook, sheet_name=None)
    col, kind = DUST_COLUMN[site]
    weather = sheets["Weather"]
    stem = workbook.stem
    with open(out_dir / f"{stem}_weather.csv", "w") as f:
        f.write("timestamp,wind_speed_m_s,air_temp_c,dust_ug_m3,dust_kind\n")
        for row in weather.itertuples(index=False):
            r = row._asdict()
            t = pd.Timestamp(r["Time"]).strftime("%Y-%m-%dT%H:%M:%S")
            f.write(f"{t},{fmt(r['WindSpeed'])},{fmt(r['AirTemp'])},{fmt(r[col])},{kind}\n")

    tilts = sheets["Tilts"]
    avg = sheets["Reflectance_Average"]
    sig = sheets["Reflectance_Sigma"]
    mirrors = [c for c in avg.columns if c != "Time"]
    with open(out_dir / f"{stem}_reflectance.csv", "w") as f:
        f.write("timestamp,mirror_id,tilt_deg,mean_r,sigma_mean,n_pos\n")
        for i in range(len(avg)):
            t = pd.Timestamp(avg["Time"].iloc[i]).strftime("%Y-%m-%dT%H:%M:%S")
            for m in mirrors:
                mean = avg[m].iloc[i]
                s = sig[m].iloc[i]
                if pd.isna(mean):
                    continue
                tilt = float(tilts[m].iloc[0])
                f.write(
                    f"{t},{m},{tilt!r},{fmt(mean / 100.0)},"
                    f"{fmt(s / 100.0 / math.sqrt(N_POS))},{N_POS}\n"
                )


def main(src: str, dst: str):
    src, dst = Path(src), Path(dst)
    for site in DUST_COLUMN:
        out = dst / site
        out.mkdir(parents=True, exist_ok=True)
        for wb in sorted((src / site).glob(f"{site}_2*.xlsx")):
            convert(wb, site, out)
            print(f"converted {wb.name}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
