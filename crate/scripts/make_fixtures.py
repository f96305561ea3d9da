#!/usr/bin/env python3
"""Writes the packaged fixture tree under fixtures/.

Structures and molecules are small constructed records, not real crystal
data. Replay entries hold the benchmark values plus synthetic
intermediates for the multi-step binding workflow. Run from the repo root:

    python3 scripts/make_fixtures.py
"""

import hashlib
import os
import random

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "fixtures")


def out(rel, text):
    path = os.path.join(ROOT, rel)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def num(v):
    # matches the shortest round-trip formatting used by the engine
    if v == 0:
        return "0"
    if float(v).is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(float(v))


# ---------------------------------------------------------------- structures

def toy_atoms(metal, a):
    """Metal nodes on two sites with a short linker skeleton; about 3 Å
    between neighbours, so the cell interior stays open for guests."""
    d = 1.9 / a
    atoms = [(metal, 0.0, 0.0, 0.0), (metal, 0.5, 0.5, 0.0)]
    for (x, y, z) in [(0.0, 0.0, 0.0), (0.5, 0.5, 0.0)]:
        atoms.append(("O", x + d, y, z))
        atoms.append(("O", x, y + d, z))
    atoms.append(("C", 0.25, 0.0, 0.0))
    atoms.append(("C", 0.0, 0.25, 0.0))
    atoms.append(("C", 0.75, 0.5, 0.0))
    atoms.append(("H", 0.25, 0.0, 0.5))
    return atoms


STRUCTURES = [
    # id, names, formula, cell, metal (None = descriptor-only), atom_count, descriptors
    ("RUBTAK", ["UiO-66", "UiO66"], "Zr6O4(OH)4(BDC)6", 20.7465, "Zr", None,
     {"surface_area": 1946.02, "pld": 3.9, "lcd": 8.5, "pore_volume": 0.41, "diffusivity_CO2": 1.1e-05,
      "ea_CO2": 0.12, "henry_CO2": 2.1e-05, "qsat_CO2": 6.2, "binding_CO2": -0.28}),
    ("FIQCEN", ["HKUST-1", "Cu-BTC", "MOF-199"], "Cu3(BTC)2", 26.343, "Cu", None,
     {"surface_area": 1850.0, "pld": 6.5, "lcd": 13.2, "henry_CO2": 3.6e-05, "qsat_CO2": 10.5,
      "binding_CO2": -0.31, "charge_transfer_CO2": 0.042, "diffusivity_CO2": 2.3e-05}),
    ("OFERUN", ["ZIF-8"], "Zn(mIm)2", 16.991, "Zn", None,
     {"surface_area": 1630.0, "pld": 3.4, "lcd": 11.4, "henry_CO2": 1.2e-05, "qsat_CO2": 5.1,
      "binding_CO2": -0.19, "charge_transfer_CO2": 0.018, "diffusivity_CO2": 4.0e-06}),
    ("GAYGAQ", [], "", 14.2, "Mg", None, {"band_gap": 2.1}),
    ("GIFKEL", [], "", 13.6, "Zn", None, {"band_gap": 3.19}),
    ("PUPJER", [], "", 24.0, None, 412, {"lcd": 11.35, "pld": 9.8}),
    ("RUPTED", [], "", 15.0, None, 180, {"lcd": 4.59, "pld": 3.7}),
    ("NORPIV", [], "", 16.0, None, 220, {"pld": 3.55, "lcd": 5.1}),
    ("NUYQUU", [], "", 17.0, None, 264, {"pld": 3.47, "lcd": 4.9, "band_gap": 2.9}),
    ("CICYIX", [], "", 18.0, None, 300, {"henry_N2": 4.0e-06, "qsat_N2": 7.0}),
    ("FIGXEY", [], "", 18.0, None, 330, {"henry_N2": 6.0e-06, "qsat_N2": 9.0}),
    ("tobmof-7165", [], "", 30.0, None, 960, {"henry_CH4": 1.3e-05, "qsat_CH4": 12.0}),
    ("tobmof-7187", [], "", 30.0, None, 1020, {"henry_CH4": 1.6e-05, "qsat_CH4": 14.0}),
    ("BUKRUW01", [], "", 12.0, None, 96, {"diffusivity_O2": 2.62e-04}),
    ("MAPCIP", [], "", 12.0, None, 104, {"diffusivity_O2": 2.97e-04}),
    ("GUXQAR", [], "", 11.0, None, 84, {"band_gap": 0.07}),
    ("RURPAW", [], "", 11.0, None, 76, {"band_gap": 1.14}),
]


def structure_record(sid, names, formula, a, metal, count, desc):
    lines = [f"id {sid}"]
    lines += [f"name {n}" for n in names]
    if formula:
        lines.append(f"formula {formula}")
    lines.append(f"lattice {num(a)} {num(a)} {num(a)} 90 90 90")
    lines.append("valid true")
    atoms = toy_atoms(metal, a) if metal else []
    lines.append(f"atom_count {len(atoms) if metal else count}")
    if atoms:
        lines.append("[atoms]")
        for el, x, y, z in atoms:
            lines.append(f"{el} {num(round(x, 6))} {num(round(y, 6))} {num(round(z, 6))} -")
    lines.append("[descriptors]")
    for k in sorted(desc):
        lines.append(f"{k} {num(desc[k])}")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------- molecules

MOLECULES = {
    "CO2": (["carbon dioxide"], [("C", 0, 0, 0, 0.7), ("O", 1.16, 0, 0, -0.35), ("O", -1.16, 0, 0, -0.35)]),
    "H2O": (["water"], [("O", 0, 0, 0, -0.8476), ("H", 0.8165, 0.5773, 0, 0.4238), ("H", -0.8165, 0.5773, 0, 0.4238)]),
    "CH4": (["methane"], [("C", 0, 0, 0, 0)]),
    "N2": (["nitrogen"], [("N", 0.55, 0, 0, 0), ("N", -0.55, 0, 0, 0)]),
    "O2": (["oxygen"], [("O", 0.605, 0, 0, 0), ("O", -0.605, 0, 0, 0)]),
    "H2": (["hydrogen"], [("H", 0, 0, 0, 0)]),
}

# species, site, element, epsilon K, sigma Å, charge e, source
FORCEFIELD = [
    ("CO2", "C", "C", 27.0, 2.80, 0.70, "TraPPE"),
    ("CO2", "O1", "O", 79.0, 3.05, -0.35, "TraPPE"),
    ("CO2", "O2", "O", 79.0, 3.05, -0.35, "TraPPE"),
    ("H2O", "O", "O", 78.2, 3.166, -0.8476, "SPC/E"),
    ("H2O", "H1", "H", 0.0, 1.0, 0.4238, "SPC/E"),
    ("H2O", "H2", "H", 0.0, 1.0, 0.4238, "SPC/E"),
    ("CH4", "CH4", "C", 148.0, 3.73, 0.0, "TraPPE"),
    ("N2", "N1", "N", 36.0, 3.31, 0.0, "TraPPE"),
    ("N2", "N2", "N", 36.0, 3.31, 0.0, "TraPPE"),
    ("O2", "O1", "O", 49.0, 3.02, 0.0, "TraPPE"),
    ("O2", "O2", "O", 49.0, 3.02, 0.0, "TraPPE"),
    ("H2", "H2", "H", 34.2, 2.96, 0.0, "Buch"),
]


# -------------------------------------------------------------------- replay

def chash(conditions):
    return hashlib.sha256(conditions.encode()).hexdigest()[:12]


# (tool, structure, task, conditions, metric, value, unit, source)
REPLAY = [
    ("geometry", "RUBTAK", "surface_area", "probe_radius=1.2", "surface_area", "1946.02", "m²/g", "recorded"),
    ("geometry", "PUPJER", "pore_diameter", "", "lcd", "11.35", "Å", "reference"),
    ("geometry", "RUPTED", "pore_diameter", "", "lcd", "4.59", "Å", "reference"),
    ("geometry", "NORPIV", "pore_diameter", "", "pld", "3.55", "Å", "reference"),
    ("geometry", "NUYQUU", "pore_diameter", "", "pld", "3.47", "Å", "reference"),
    ("gcmc", "CICYIX", "uptake", "guest=N2;pressure=200;temperature=77", "uptake", "75.57", "cm³/g", "reference"),
    ("gcmc", "FIGXEY", "uptake", "guest=N2;pressure=200;temperature=77", "uptake", "150.62", "cm³/g", "reference"),
    ("gcmc", "tobmof-7165", "uptake", "guest=CH4;pressure=6500000;temperature=298", "uptake", "184.56", "cm³/g", "reference"),
    ("gcmc", "tobmof-7187", "uptake", "guest=CH4;pressure=6500000;temperature=298", "uptake", "233.85", "cm³/g", "reference"),
    ("gcmc", "tobmof-7165", "uptake", "guest=H2;pressure=10000000;temperature=243", "uptake", "9.13", "g/L", "reference"),
    ("gcmc", "tobmof-7187", "uptake", "guest=H2;pressure=10000000;temperature=243", "uptake", "10.52", "g/L", "reference"),
    ("md", "BUKRUW01", "diffusion", "guest=O2;temperature=298", "diffusivity", "2.62e-4", "cm²/s", "reference"),
    ("md", "MAPCIP", "diffusion", "guest=O2;temperature=298", "diffusivity", "2.97e-4", "cm²/s", "reference"),
    ("md", "RUBTAK", "diffusion", "guest=CO2;temperature=298", "diffusivity", "1.1e-5", "cm²/s", "synthetic"),
    ("dft", "GUXQAR", "band_gap", "target=host", "band_gap", "0.07", "eV", "reference"),
    ("dft", "RURPAW", "band_gap", "target=host", "band_gap", "1.14", "eV", "reference"),
    ("dft", "NUYQUU", "band_gap", "target=host", "band_gap", "2.90", "eV", "reference"),
    ("dft", "GIFKEL", "band_gap", "target=host", "band_gap", "3.19", "eV", "reference"),
]

# binding workflow: host, guest and complex optimisations, the prescreen
# pick and the final binding energy (only the last is a benchmark value)
BINDING = [
    ("GAYGAQ", "CO2", -412.37, -22.96, 3, "-0.32"),
    ("GAYGAQ", "H2O", -412.37, -14.22, 7, "-0.33"),
    ("GIFKEL", "CO2", -389.05, -22.96, 1, "-0.20"),
    ("GIFKEL", "H2O", -389.05, -14.22, 5, "-0.48"),
]
for sid, g, e_host, e_guest, pick, be in BINDING:
    e_complex = round(e_host + e_guest + float(be), 6)
    REPLAY += [
        ("dft", sid, "geometry_optimization", f"guest={g};target=host", "energy", num(e_host), "eV", "synthetic"),
        ("dft", sid, "geometry_optimization", f"guest={g};target=guest", "energy", num(e_guest), "eV", "synthetic"),
        ("mlip", sid, "prescreen", f"guest={g}", "selected_index", str(pick), "count", "synthetic"),
        ("dft", sid, "geometry_optimization", f"guest={g};target=complex", "energy", num(e_complex), "eV", "synthetic"),
        ("dft", sid, "binding_energy", f"guest={g};target=complex", "binding_energy", be, "eV", "reference"),
    ]


# ------------------------------------------------------------------ benchmark

# tool, structure, property, unit, reference, expected, source, query, metric
BENCHMARK = [
    ("zeo++", "PUPJER", "LCD", "Å", "11.35", "11.35", "lit-geometry", "largest cavity diameter of PUPJER", "lcd"),
    ("zeo++", "RUPTED", "LCD", "Å", "4.59", "4.59", "lit-geometry", "largest cavity diameter of RUPTED", "lcd"),
    ("zeo++", "NORPIV", "PLD", "Å", "3.55", "3.55", "lit-geometry", "pore-limiting diameter of NORPIV", "pld"),
    ("zeo++", "NUYQUU", "PLD", "Å", "3.47", "3.47", "lit-geometry", "pore-limiting diameter of NUYQUU", "pld"),
    ("raspa", "CICYIX", "N2 uptake 77K, 200Pa", "cm³/g", "75.38", "75.57", "lit-gcmc", "N2 uptake of CICYIX at 77 K and 200 Pa", "uptake"),
    ("raspa", "FIGXEY", "N2 uptake 77K, 200Pa", "cm³/g", "150.61", "150.62", "lit-gcmc", "N2 uptake of FIGXEY at 77 K and 200 Pa", "uptake"),
    ("raspa", "tobmof-7165", "CH4 uptake 298K, 65bar", "cm³/g", "184.00", "184.56", "lit-gcmc", "CH4 uptake of tobmof-7165 at 298 K and 65 bar", "uptake"),
    ("raspa", "tobmof-7187", "CH4 uptake 298K, 65bar", "cm³/g", "233.00", "233.85", "lit-gcmc", "CH4 uptake of tobmof-7187 at 298 K and 65 bar", "uptake"),
    ("raspa", "tobmof-7165", "H2 uptake 243K, 100bar", "g/L", "9.50", "9.13", "lit-gcmc", "H2 uptake of tobmof-7165 at 243 K and 100 bar", "uptake"),
    ("raspa", "tobmof-7187", "H2 uptake 243K, 100bar", "g/L", "11.20", "10.52", "lit-gcmc", "H2 uptake of tobmof-7187 at 243 K and 100 bar", "uptake"),
    ("lammps", "BUKRUW01", "O2 diffusivity", "cm²/s", "2.59e-4", "2.62e-4", "lit-md", "O2 diffusion coefficient in BUKRUW01", "diffusivity"),
    ("lammps", "MAPCIP", "O2 diffusivity", "cm²/s", "2.89e-4", "2.97e-4", "lit-md", "O2 diffusion coefficient in MAPCIP", "diffusivity"),
    ("vasp", "GUXQAR", "bandgap", "eV", "0.08", "0.07", "lit-dft", "band gap of GUXQAR", "band_gap"),
    ("vasp", "RURPAW", "bandgap", "eV", "1.11", "1.14", "lit-dft", "band gap of RURPAW", "band_gap"),
    ("vasp", "NUYQUU", "bandgap", "eV", "2.90", "2.90", "lit-dft", "band gap of NUYQUU", "band_gap"),
    ("vasp", "GIFKEL", "bandgap", "eV", "3.18", "3.19", "lit-dft", "band gap of GIFKEL", "band_gap"),
    ("vasp", "GAYGAQ", "CO2 binding energy", "eV", "-0.33", "-0.32", "lit-binding", "CO2 binding energy in GAYGAQ", "binding_energy"),
    ("vasp", "GAYGAQ", "H2O binding energy", "eV", "-0.28", "-0.33", "lit-binding", "H2O binding energy in GAYGAQ", "binding_energy"),
    ("vasp", "GIFKEL", "CO2 binding energy", "eV", "-0.20", "-0.20", "lit-binding", "CO2 binding energy in GIFKEL", "binding_energy"),
    ("vasp", "GIFKEL", "H2O binding energy", "eV", "-0.58", "-0.48", "lit-binding", "H2O binding energy in GIFKEL", "binding_energy"),
]


# ---------------------------------------------------------------- screening

def descriptor_table(rows):
    head = "structure_id\tvalid\tatom_count\tpld\tlcd\thenry_CH4\tqsat_CH4\n"
    body = "".join(
        f"{sid}\t{'true' if ok else 'false'}\t{atoms}\t{num(pld)}\t{num(lcd)}\t{num(h)}\t{num(q)}\n"
        for sid, ok, atoms, pld, lcd, h, q in rows
    )
    return head + body


def coremof_rows():
    """3786 rows: 10 invalid, 5 over the 5000-atom limit, 1878 of the rest
    open to a 3.8 Å probe. Henry constants are distinct so the top 1000
    is unambiguous."""
    rng = random.Random(2024)
    n, invalid, heavy, open_ = 3786, 10, 5, 1878
    kinds = ["invalid"] * invalid + ["heavy"] * heavy + ["open"] * open_
    kinds += ["blocked"] * (n - len(kinds))
    rng.shuffle(kinds)
    henry = rng.sample(range(1, 10 * n), n)
    rows = []
    for i, kind in enumerate(kinds):
        atoms = rng.randint(5001, 9000) if kind == "heavy" else rng.randint(20, 4800)
        pld = round(rng.uniform(3.8, 12.0), 3) if kind == "open" else round(rng.uniform(2.0, 3.79), 3)
        if kind in ("invalid", "heavy"):
            pld = round(rng.uniform(2.0, 12.0), 3)
        lcd = round(pld + rng.uniform(0.2, 6.0), 3)
        rows.append((f"cm24-{i + 1:05d}", kind != "invalid", atoms, pld, lcd, henry[i] * 1e-7, 8.0))
    return rows


def small_db(blocked):
    """50 rows whose uptake is monotone in the Henry constant (shared
    q_sat). Filtered rows sit at the bottom of the ranking unless
    `blocked`, where the best row has a pore too narrow for CH4."""
    rows = []
    for i in range(50):
        h = (50 - i) * 1e-6
        ok, atoms, pld = True, 100 + 10 * i, 5.0 + (i % 7) * 0.5
        if i >= 44:
            ok = i % 2 == 0
            pld = 3.0 if i % 2 == 0 else pld
        if blocked and i == 0:
            pld = 3.0
        rows.append((f"fx-{i + 1:02d}", ok, atoms, pld, pld + 2.0, h, 8.0))
    return rows


# ------------------------------------------------------------------- corpus

CORPUS = {
    "gcmc_settings.txt": """[Abstract]
Adsorption isotherms of light gases in porous frameworks were computed with grand canonical Monte Carlo. The calculations use rigid frameworks and standard guest models.

[Methods]
Guest molecules were described with the TraPPE force field. Framework atoms took UFF parameters combined by Lorentz-Berthelot rules. A cutoff of 12.8 Å was used for all Lennard-Jones interactions. Each point ran 10000 equilibration cycles followed by 10000 production cycles. Partial charges on the framework were assigned with an equilibration scheme before the runs.

[Results]
Methane loadings at 65 bar rose with accessible surface area. Nitrogen at 77 K filled the smallest pores first. The largest deviations appeared for frameworks with open metal sites.

[References]
Placeholder reference list for the constructed corpus.
""",
    "md_transport.txt": """[Introduction]
Self-diffusion of small molecules controls separation kinetics in many frameworks. Molecular dynamics gives direct access to mean squared displacements.

[Methods]
Trajectories were run in the NVT ensemble at 298 K with a 1 fs timestep. Charged guests such as CO2 need a long-range electrostatic solver, so the pair style combined Lennard-Jones and Coulomb terms with a PPPM solver. A purely Lennard-Jones pair style is only appropriate for neutral guests. The cutoff was 12 Å throughout.

[Results]
Diffusivities were extracted from the linear regime of the mean squared displacement. Oxygen diffused faster than carbon dioxide in every framework studied.
""",
    "dft_binding.txt": """[Methods]
Binding energies were computed as the energy of the host-guest complex minus the energies of the isolated host and guest. All structures were relaxed with a plane-wave cutoff of 520 eV and an electronic convergence of 1e-5 eV. Initial guest positions were drawn at random and ranked with a cheap interatomic potential before the expensive relaxation.

[Analysis]
Charge transfer between framework and guest was quantified by Bader partitioning of the converged charge density. Larger transfer correlated with stronger binding at open metal sites.
""",
    "screening_workflow.txt": """[Overview]
High-throughput screening narrows a large structure database to a short list worth simulating in detail. Cheap filters run first and expensive simulations run last.

[Filters]
Structures that fail validation are removed. Structures with more than 5000 atoms are dropped before GCMC. A geometric accessibility test compares the pore-limiting diameter with the kinetic diameter of the guest. The remaining structures are ranked by the Henry constant, which tracks low-pressure uptake.
""",
}


# -------------------------------------------------------------------- faults

FAULTS = {
    "lammps_segfault.log": "LAMMPS (2 Aug 2023)\nReading data file ...\nSegmentation fault (core dumped)\n",
    "vasp_zbrent.log": " running on 8 total cores\n ZBRENT: fatal error in bracketing\n     please rerun with smaller EDIFF, or copy CONTCAR\n",
    "raspa_missing_key.log": "Reading input\nERROR: missing key ExternalPressure\n",
    "raspa_oom.log": "Cycle 1200\nout of memory allocating 8 GB\n",
    "zeo_ok.log": "zeo++ 0.3\nnetwork: finished\n",
    "truncated.log": "Cycle 200\nCycle 300\n",
}


def main():
    for sid, names, formula, a, metal, count, desc in STRUCTURES:
        out(f"structures/{sid}.rec", structure_record(sid, names, formula, a, metal, count, desc))
    out("structures/pormake.tsv", "# alias\tstructure_id\ntbo+N409+E14\tFIQCEN\n")
    for name, (syn, atoms) in MOLECULES.items():
        lines = [f"name {name}"] + [f"synonym {s}" for s in syn] + ["net_charge 0", "[atoms]"]
        lines += [f"{el} {num(x)} {num(y)} {num(z)} {num(q)}" for el, x, y, z, q in atoms]
        out(f"molecules/{name}.rec", "\n".join(lines) + "\n")
    ff = "species\tsite\telement\tepsilon_K\tsigma_A\tcharge_e\tsource\n"
    ff += "".join(f"{s}\t{site}\t{el}\t{num(e)}\t{num(sg)}\t{num(q)}\t{src}\n" for s, site, el, e, sg, q, src in FORCEFIELD)
    out("forcefields/guests.tsv", ff)

    rep = "tool\tstructure\ttask\tconditions_hash\tmetric\tvalue\tunit\tsource\n"
    for tool, sid, task, cond, metric, value, unit, src in REPLAY:
        rep += f"# {tool} {sid} {task} [{cond}]\n"
        rep += f"{tool}\t{sid}\t{task}\t{chash(cond)}\t{metric}\t{value}\t{unit}\t{src}\n"
    out("replay.tsv", rep)

    bench = "tool\tstructure_id\tproperty\tunit\treference_value\texpected_value\tsource\tquery\tmetric\n"
    bench += "".join("\t".join(r) + "\n" for r in BENCHMARK)
    out("benchmark.tsv", bench)

    out("screening/coremof-2024-fsr.tsv", descriptor_table(coremof_rows()))
    out("screening/fixture-db.tsv", descriptor_table(small_db(False)))
    out("screening-extra/fixture-db-blocked.tsv", descriptor_table(small_db(True)))

    for name, text in CORPUS.items():
        out(f"corpus/{name}", text)
    for name, text in FAULTS.items():
        out(f"faults/{name}", text)


if __name__ == "__main__":
    main()
