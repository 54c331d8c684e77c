#include "opsys/store.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace opsys {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

template <class T>
std::vector<T> parse_list(const std::string& v) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        size_t used = 0;
        if constexpr (std::is_same_v<T, int>) out.push_back(std::stoi(item, &used));
        else out.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument("bad list entry '" + item + "'");
    }
    return out;
}

double parse_double(const std::string& v) {
    size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("bad number '" + v + "'");
    return d;
}

long long parse_int(const std::string& v) {
    size_t used = 0;
    long long d = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("bad integer '" + v + "'");
    return d;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

sdp::SolverOptions RunConfig::sdp() const {
    sdp::SolverOptions o;
    o.tol_psd = tol_psd;
    o.tol_feas = tol_feas;
    return o;
}

SearchOptions RunConfig::search() const {
    SearchOptions o;
    o.ranks = ranks;
    o.restarts = restarts;
    o.rounds = rounds;
    o.eps_schedule = eps_schedule;
    o.seed = seed;
    o.sdp = sdp();
    return o;
}

OuterOptions RunConfig::outer() const {
    OuterOptions o;
    o.rounds = outer_rounds;
    o.seed = seed;
    o.sdp = sdp();
    return o;
}

nlohmann::json RunConfig::to_json() const {
    return {{"tol_psd", tol_psd},   {"tol_feas", tol_feas},         {"tol_cert", tol_cert},
            {"ranks", ranks},       {"restarts", restarts},         {"rounds", rounds},
            {"eps_schedule", eps_schedule}, {"samples", samples},   {"outer_rounds", outer_rounds},
            {"seed", seed},         {"out_dir", out_dir}};
}

RunConfig parse_config(const std::string& text) {
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        auto fail = [&](const std::string& why) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + why);
        };
        if (eq == std::string::npos) fail("expected key = value");
        std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
        try {
            if (key == "tol_psd") c.tol_psd = parse_double(val);
            else if (key == "tol_feas") c.tol_feas = parse_double(val);
            else if (key == "tol_cert") c.tol_cert = parse_double(val);
            else if (key == "ranks") c.ranks = parse_list<int>(val);
            else if (key == "restarts") c.restarts = static_cast<int>(parse_int(val));
            else if (key == "rounds") c.rounds = static_cast<int>(parse_int(val));
            else if (key == "eps_schedule") c.eps_schedule = parse_list<double>(val);
            else if (key == "samples") c.samples = static_cast<int>(parse_int(val));
            else if (key == "outer_rounds") c.outer_rounds = static_cast<int>(parse_int(val));
            else if (key == "seed") c.seed = static_cast<unsigned long long>(parse_int(val));
            else if (key == "out_dir") c.out_dir = val;
            else fail("unknown key '" + key + "'");
        } catch (const std::invalid_argument& e) {
            if (std::string(e.what()).rfind("config line", 0) == 0) throw;
            fail(e.what());
        } catch (const std::out_of_range&) {
            fail("value out of range");
        }
    }
    if (!(c.tol_psd > 0 && c.tol_feas > 0 && c.tol_cert > 0))
        throw std::invalid_argument("config: tolerances must be positive");
    for (int r : c.ranks)
        if (r < 1) throw std::invalid_argument("config: ranks must be positive");
    for (double e : c.eps_schedule)
        if (!(e > 0)) throw std::invalid_argument("config: eps_schedule entries must be positive");
    if (c.samples < 0 || c.restarts < 1 || c.rounds < 1 || c.outer_rounds < 1)
        throw std::invalid_argument("config: counts must be positive");
    return c;
}

RunConfig load_config(const fs::path& path) { return parse_config(read_file(path)); }

RunConfig default_config() {
    const char* env = std::getenv("OPSYS_CONFIG");
    if (env && *env) return load_config(env);
    return RunConfig{};
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return out.str();
}

void write_atomic(const fs::path& path, const std::string& data) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << data;
        out.flush();
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

nlohmann::json max_certificate_artifact(const TensorElement& u, const MaxCertificate& c, unsigned long long seed,
                                        double tol) {
    return {{"kind", "max-certificate"}, {"element", to_json(u)}, {"certificate", to_json(c)}, {"seed", seed},
            {"tol", tol}};
}

nlohmann::json outer_evidence_artifact(const TensorElement& u, const OuterEvidence& e, unsigned long long seed) {
    return {{"kind", "outer-evidence"}, {"element", to_json(u)}, {"evidence", to_json(e)}, {"seed", seed}};
}

nlohmann::json partition_artifact(const PartitionInstance& inst, const PartitionCertificate& c) {
    return {{"kind", "partition"}, {"instance", to_json(inst)}, {"certificate", to_json(c)}, {"seed", inst.seed}};
}

nlohmann::json probe_artifact(const ProbeReport& r) {
    return {{"kind", "probe-report"}, {"report", to_json(r, true)}, {"seed", r.options.seed}};
}

ArtifactCheck verify_artifact(const nlohmann::json& a) {
    try {
        const std::string kind = a.at("kind").get<std::string>();
        if (!a.contains("seed")) return {false, "artifact without seed"};
        if (kind == "max-certificate") {
            CertificateCheck chk = verify_certificate(tensor_element_from_json(a.at("element")),
                                                      max_certificate_from_json(a.at("certificate")),
                                                      a.at("tol").get<double>());
            return {chk.valid, chk.valid ? "" : chk.reason};
        }
        if (kind == "outer-evidence") {
            OuterOptions o;
            o.seed = a.at("seed").get<unsigned long long>();
            bool ok = recheck_evidence(tensor_element_from_json(a.at("element")),
                                       outer_evidence_from_json(a.at("evidence")), o);
            return {ok, ok ? "" : "evidence does not recheck"};
        }
        if (kind == "partition") {
            PartitionVerdict v = verify_partition(partition_instance_from_json(a.at("instance")),
                                                  partition_certificate_from_json(a.at("certificate")));
            return {v.valid, v.reason()};
        }
        if (kind == "probe-report") {
            // Certified samples are regenerated from their seeds and re-verified
            const auto& r = a.at("report");
            Factor l = parse_factor(r.at("left")), rt = parse_factor(r.at("right"));
            double margin = r.at("margin").get<double>();
            for (const auto& s : r.at("samples")) {
                if (s.at("status") != "certified") continue;
                Rng rng(s.at("seed").get<unsigned long long>());
                TensorElement u = random_min_positive(l, rt, s.at("level").get<int>(), margin, rng);
                CertificateCheck chk = verify_certificate(u, max_certificate_from_json(s.at("certificate")), 1e-8);
                if (!chk.valid)
                    return {false, "sample " + std::to_string(s.at("index").get<int>()) + ": " + chk.reason};
            }
            return {true, ""};
        }
        if (kind == "min-verdict") {
            MinVerdict v = min_positive(tensor_element_from_json(a.at("element")));
            bool ok = v.positive() == a.at("positive").get<bool>();
            return {ok, ok ? "" : "min verdict does not replay"};
        }
        if (kind == "report") return {true, ""};
        return {false, "unknown artifact kind '" + kind + "'"};
    } catch (const std::exception& e) {
        return {false, std::string("malformed artifact: ") + e.what()};
    }
}

CertificateStore::CertificateStore(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_ / "objects");
}

fs::path CertificateStore::object_path(const std::string& hash) const { return root_ / "objects" / (hash + ".json"); }

std::string CertificateStore::put(const nlohmann::json& artifact) {
    ArtifactCheck chk = verify_artifact(artifact);
    if (!chk.ok) throw std::runtime_error("refusing to store an artifact that does not verify: " + chk.reason);
    std::string data = artifact.dump();
    std::string hash = sha256_hex(data);
    if (!fs::exists(object_path(hash))) write_atomic(object_path(hash), data);
    update_index(hash, artifact);
    return hash;
}

void CertificateStore::update_index(const std::string& hash, const nlohmann::json& artifact) const {
    fs::path idx = root_ / "index.json";
    nlohmann::json index = nlohmann::json::object();
    if (fs::exists(idx)) index = nlohmann::json::parse(read_file(idx));
    if (index.contains(hash)) return;
    auto now = std::chrono::system_clock::now().time_since_epoch();
    index[hash] = {{"kind", artifact.at("kind")},
                   {"seed", artifact.at("seed")},
                   {"created", std::chrono::duration_cast<std::chrono::seconds>(now).count()}};
    write_atomic(idx, index.dump(2));
}

nlohmann::json CertificateStore::get(const std::string& hash) const {
    fs::path p = object_path(hash);
    if (!fs::exists(p)) throw std::runtime_error("no artifact " + hash);
    std::string data = read_file(p);
    if (sha256_hex(data) != hash) throw CorruptArtifact("artifact " + hash + ": content hash mismatch");
    nlohmann::json a;
    try {
        a = nlohmann::json::parse(data);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptArtifact("artifact " + hash + ": " + e.what());
    }
    ArtifactCheck chk = verify_artifact(a);
    if (!chk.ok) throw CorruptArtifact("artifact " + hash + " does not re-verify: " + chk.reason);
    return a;
}

std::vector<std::string> CertificateStore::list() const {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(root_ / "objects"))
        if (e.path().extension() == ".json") out.push_back(e.path().stem().string());
    std::sort(out.begin(), out.end());
    return out;
}

CertificateStore::Audit CertificateStore::verify_all() const {
    Audit a;
    for (const auto& h : list()) {
        ++a.checked;
        try {
            get(h);
        } catch (const std::exception& e) {
            a.failures.emplace_back(h, e.what());
        }
    }
    return a;
}

}  // namespace opsys
