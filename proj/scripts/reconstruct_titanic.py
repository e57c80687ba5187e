#!/usr/bin/env python3
"""Rebuild the 891-row Titanic training table in raw (uncleaned) form.

The raw passenger records come from the titanic3 table bundled with the
`dabl` wheel; the membership of the 891-row training subset comes from the
name lists bundled with the `explainerdashboard` wheel. Both wheels are
fetched from PyPI with `pip download --no-deps`.

Output columns: Survived,Pclass,Name,Sex,Age,SibSp,Parch,Ticket,Fare,Cabin,Embarked
Missing values are written as empty cells.
"""
import argparse
import csv
import io
import pathlib
import re
import subprocess
import sys
import tempfile
import zipfile


def wheel_file(workdir, package, member):
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q",
                    package, "-d", workdir], check=True)
    for whl in pathlib.Path(workdir).glob("*.whl"):
        with zipfile.ZipFile(whl) as z:
            if member in z.namelist():
                return z.read(member).decode("utf-8")
    raise SystemExit(f"{member} not found in {package}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        raw = wheel_file(tmp, "dabl==0.3.2", "dabl/datasets/titanic.csv")
        tr = wheel_file(tmp, "explainerdashboard==0.5.8",
                        "explainerdashboard/datasets/titanic_train.csv")
        te = wheel_file(tmp, "explainerdashboard==0.5.8",
                        "explainerdashboard/datasets/titanic_test.csv")

    members = []
    for text in (tr, te):
        for r in csv.DictReader(io.StringIO(text)):
            members.append((r["Name"], int(r["PassengerClass"]), float(r["Fare"]),
                            int(r["Survival"])))

    pool = list(csv.DictReader(io.StringIO(raw)))
    norm = lambda s: re.sub(r"[^a-z]", "", s.lower())
    used = set()
    rows = []
    for name, pclass, fare, survived in members:
        hits = [i for i, r in enumerate(pool)
                if i not in used and norm(r["name"]) == norm(name) and int(r["pclass"]) == pclass
                and r["survived"] == str(survived)
                and (r["fare"] == "?" or abs(float(r["fare"]) - fare) < 1e-3)]
        if not hits:
            raise SystemExit(f"no raw record for {name!r}")
        used.add(hits[0])
        r = pool[hits[0]]
        clean = lambda v: "" if v == "?" else v
        rows.append([r["survived"], r["pclass"], r["name"], r["sex"], clean(r["age"]),
                     r["sibsp"], r["parch"], r["ticket"], clean(r["fare"]),
                     clean(r["cabin"]), clean(r["embarked"])])

    with open(args.out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["Survived", "Pclass", "Name", "Sex", "Age", "SibSp", "Parch",
                    "Ticket", "Fare", "Cabin", "Embarked"])
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
