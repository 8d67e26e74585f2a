#include "adampnp/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace adampnp {

void Backbone::validate() const {
    if (n_residues < 0) throw DimensionError("negative residue count");
    if (coords.size() != Eigen::Index(12) * n_residues)
        throw DimensionError("backbone coords size " + std::to_string(coords.size()) +
                             " does not match 12 * " + std::to_string(n_residues));
    for (Eigen::Index i = 0; i < coords.size(); ++i)
        if (!std::isfinite(coords[i]))
            throw std::invalid_argument("backbone contains non-finite coordinate");
}

Backbone backbone_from_coords(int n_residues, const Vec& coords) {
    Backbone b;
    b.n_residues = n_residues;
    b.coords = coords;
    b.validate();
    return b;
}

namespace {

// Returns the 1-based column slice [begin, end] of a PDB line, trimmed.
std::string field(const std::string& line, size_t begin, size_t end) {
    if (line.size() < begin) return "";
    std::string s = line.substr(begin - 1, std::min(end, line.size()) - begin + 1);
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_coord(const std::string& line, size_t begin, size_t end, int lineno,
                   const char* what) {
    std::string s = field(line, begin, end);
    if (s.empty()) throw ParseError(std::string("missing ") + what + " field", lineno);
    char* endp = nullptr;
    double v = std::strtod(s.c_str(), &endp);
    if (endp == nullptr || *endp != '\0' || !std::isfinite(v))
        throw ParseError(std::string("bad ") + what + " value '" + s + "'", lineno);
    return v;
}

struct RawAtom {
    Vec3 pos;
    double occupancy;
    bool present = false;
};

int atom_slot(const std::string& name) {
    if (name == "N") return 0;
    if (name == "CA") return 1;
    if (name == "C") return 2;
    if (name == "O") return 3;
    return -1;
}

} // namespace

Backbone parse_pdb(std::istream& in) {
    // Residues keyed by (resSeq, insertion code), kept in order of first
    // appearance within the first chain of the first model.
    std::map<std::pair<int, char>, int> order;
    std::vector<std::array<RawAtom, 4>> residues;

    std::string line;
    int lineno = 0;
    bool in_first_model = true;
    bool model_seen = false;
    char chain = '\0';
    bool chain_set = false;

    while (std::getline(in, line)) {
        ++lineno;
        std::string rec = field(line, 1, 6);
        if (rec == "MODEL") {
            if (model_seen) {
                in_first_model = false;
            }
            model_seen = true;
            continue;
        }
        if (rec == "ENDMDL") {
            in_first_model = false;
            continue;
        }
        if (rec == "END") break;
        if (!in_first_model) continue;
        if (rec != "ATOM") continue;

        if (line.size() < 54) throw ParseError("truncated ATOM record", lineno);

        std::string name = field(line, 13, 16);
        int slot = atom_slot(name);
        if (slot < 0) continue;

        char cid = line.size() >= 22 ? line[21] : ' ';
        if (!chain_set) {
            chain = cid;
            chain_set = true;
        } else if (cid != chain) {
            continue;
        }

        std::string seq_s = field(line, 23, 26);
        if (seq_s.empty()) throw ParseError("missing residue number", lineno);
        char* endp = nullptr;
        long seq = std::strtol(seq_s.c_str(), &endp, 10);
        if (endp == nullptr || *endp != '\0')
            throw ParseError("bad residue number '" + seq_s + "'", lineno);
        char icode = line.size() >= 27 ? line[26] : ' ';

        RawAtom atom;
        atom.pos[0] = parse_coord(line, 31, 38, lineno, "x");
        atom.pos[1] = parse_coord(line, 39, 46, lineno, "y");
        atom.pos[2] = parse_coord(line, 47, 54, lineno, "z");
        std::string occ_s = field(line, 55, 60);
        atom.occupancy = occ_s.empty() ? 1.0 : std::strtod(occ_s.c_str(), nullptr);
        atom.present = true;

        auto key = std::make_pair(int(seq), icode);
        auto it = order.find(key);
        if (it == order.end()) {
            it = order.emplace(key, int(residues.size())).first;
            residues.emplace_back();
        }
        RawAtom& existing = residues[it->second][slot];
        // Alternate locations: keep the higher-occupancy copy.
        if (!existing.present || atom.occupancy > existing.occupancy) existing = atom;
    }

    // `residues` is already in order of first appearance; the map above is
    // only the lookup index.
    std::vector<const std::array<RawAtom, 4>*> complete;
    for (int idx = 0; idx < int(residues.size()); ++idx) {
        const auto& res = residues[idx];
        bool ok = true;
        for (const auto& a : res) ok = ok && a.present;
        if (ok) complete.push_back(&res);
    }
    if (complete.empty())
        throw ParseError("no complete backbone residues (need N, CA, C, O)");

    Backbone b;
    b.n_residues = int(complete.size());
    b.coords.resize(12 * b.n_residues);
    for (int r = 0; r < b.n_residues; ++r)
        for (int s = 0; s < 4; ++s)
            b.coords.segment<3>(12 * r + 3 * s) = (*complete[r])[s].pos;
    b.validate();
    return b;
}

Backbone parse_pdb(const std::string& text) {
    std::istringstream in(text);
    return parse_pdb(in);
}

Backbone load_pdb_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open PDB file: " + path);
    return parse_pdb(in);
}

void write_pdb(const Backbone& b, std::ostream& out) {
    b.validate();
    char buf[96];
    int serial = 1;
    for (int r = 0; r < b.n_residues; ++r) {
        for (int s = 0; s < 4; ++s) {
            Vec3 p = b.coords.segment<3>(12 * r + 3 * s);
            const char* name = Backbone::kAtomNames[s];
            const char* element = (s == 0) ? "N" : (s == 3 ? "O" : "C");
            std::snprintf(buf, sizeof(buf),
                          "ATOM  %5d  %-3s ALA A%4d    %8.3f%8.3f%8.3f%6.2f%6.2f          %2s\n",
                          serial++, name, r + 1, p[0], p[1], p[2], 1.0, 0.0, element);
            out << buf;
        }
    }
    std::snprintf(buf, sizeof(buf), "TER   %5d      ALA A%4d\n", serial, b.n_residues);
    out << buf << "END\n";
}

void write_pdb_file(const Backbone& b, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    write_pdb(b, out);
}

Backbone center(const Backbone& b) {
    b.validate();
    Vec3 mean = Vec3::Zero();
    int n = b.n_atoms();
    for (int a = 0; a < n; ++a) mean += b.atom(a);
    if (n > 0) mean /= double(n);
    Backbone out = b;
    for (int a = 0; a < n; ++a) out.set_atom(a, b.atom(a) - mean);
    return out;
}

Alignment kabsch_align(const Vec& mobile_xyz, const Vec& ref_xyz) {
    if (mobile_xyz.size() != ref_xyz.size())
        throw DimensionError("point sets differ in size");
    if (mobile_xyz.size() % 3 != 0)
        throw DimensionError("flat xyz array length not divisible by 3");
    Eigen::Index n = mobile_xyz.size() / 3;
    if (n < 3) throw std::invalid_argument("need at least 3 points to superpose");

    // Identical point sets superpose trivially. Returning the exact
    // identity keeps self-RMSD at zero instead of SVD rounding noise.
    if ((mobile_xyz.array() == ref_xyz.array()).all()) {
        Alignment a;
        a.rotation = Mat3::Identity();
        a.translation = Vec3::Zero();
        a.rmsd = 0.0;
        return a;
    }

    Vec3 cm = Vec3::Zero(), cr = Vec3::Zero();
    for (Eigen::Index i = 0; i < n; ++i) {
        cm += mobile_xyz.segment<3>(3 * i);
        cr += ref_xyz.segment<3>(3 * i);
    }
    cm /= double(n);
    cr /= double(n);

    Mat3 h = Mat3::Zero();
    for (Eigen::Index i = 0; i < n; ++i)
        h += (mobile_xyz.segment<3>(3 * i) - cm) * (ref_xyz.segment<3>(3 * i) - cr).transpose();

    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU(), v = svd.matrixV();
    double d = (v * u.transpose()).determinant();
    Mat3 s = Mat3::Identity();
    s(2, 2) = d < 0 ? -1.0 : 1.0;
    Mat3 rot = v * s * u.transpose();

    Vec3 t = cr - rot * cm;
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        Vec3 moved = rot * mobile_xyz.segment<3>(3 * i) + t;
        ss += (moved - ref_xyz.segment<3>(3 * i)).squaredNorm();
    }
    Alignment a;
    a.rotation = rot;
    a.translation = t;
    a.rmsd = std::sqrt(ss / double(n));
    return a;
}

Alignment kabsch_align(const Backbone& mobile, const Backbone& ref,
                       const std::vector<int>& atoms) {
    mobile.validate();
    ref.validate();
    Vec m(3 * atoms.size()), r(3 * atoms.size());
    for (size_t i = 0; i < atoms.size(); ++i) {
        int a = atoms[i];
        if (a < 0 || a >= mobile.n_atoms() || a >= ref.n_atoms())
            throw DimensionError("alignment atom index " + std::to_string(a) + " out of range");
        m.segment<3>(3 * i) = mobile.atom(a);
        r.segment<3>(3 * i) = ref.atom(a);
    }
    return kabsch_align(m, r);
}

Alignment kabsch_align(const Backbone& mobile, const Backbone& ref) {
    if (mobile.n_residues != ref.n_residues)
        throw DimensionError("residue counts differ: " + std::to_string(mobile.n_residues) +
                             " vs " + std::to_string(ref.n_residues));
    return kabsch_align(mobile, ref, mobile.calpha_indices());
}

double calpha_rmsd(const Backbone& mobile, const Backbone& ref) {
    return kabsch_align(mobile, ref).rmsd;
}

Backbone transformed(const Backbone& b, const Mat3& rotation, const Vec3& translation) {
    Backbone out = b;
    for (int a = 0; a < b.n_atoms(); ++a)
        out.set_atom(a, rotation * b.atom(a) + translation);
    return out;
}

} // namespace adampnp
