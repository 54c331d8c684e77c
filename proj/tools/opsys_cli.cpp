#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "opsys/store.hpp"

using namespace opsys;
namespace fs = std::filesystem;

namespace {

constexpr int kExitDefinite = 0;
constexpr int kExitError = 1;
constexpr int kExitUndecided = 2;

struct Globals {
    std::string config_path;
    std::string store_dir;
    long long seed = -1;
    bool json = false;
};

RunConfig resolve_config(const Globals& g) {
    RunConfig c = g.config_path.empty() ? default_config() : load_config(g.config_path);
    if (g.seed >= 0) c.seed = static_cast<unsigned long long>(g.seed);
    if (!g.store_dir.empty()) c.out_dir = g.store_dir;
    return c;
}

// JSON file with line/column diagnostics on syntax errors
nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), {});
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        size_t pos = std::min<size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        int line = 1, col = 1;
        for (size_t i = 0; i < pos; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw std::runtime_error(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
    }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_atomic(path, j.dump(2) + "\n");
}

void emit(const Globals& g, const nlohmann::json& summary) {
    if (g.json) {
        std::cout << summary.dump(2) << "\n";
        return;
    }
    for (auto it = summary.begin(); it != summary.end(); ++it) {
        std::cout << it.key() << ": ";
        if (it->is_string()) std::cout << it->get<std::string>();
        else std::cout << it->dump();
        std::cout << "\n";
    }
}

// "m=2", "d=3" or "d=2+1"
std::map<std::string, std::string> parse_kv(const std::vector<std::string>& items) {
    std::map<std::string, std::string> out;
    for (const auto& it : items) {
        auto eq = it.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("expected key=value, got '" + it + "'");
        out[it.substr(0, eq)] = it.substr(eq + 1);
    }
    return out;
}

AmbientAlgebra parse_dims(const std::string& s) {
    std::vector<int> dims;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, '+')) {
        int d = std::stoi(part);
        if (d < 1) throw std::invalid_argument("block sizes must be positive");
        dims.push_back(d);
    }
    if (dims.empty()) throw std::invalid_argument("empty block list");
    return AmbientAlgebra(dims);
}

int cmd_catalog_list(const Globals& g) {
    nlohmann::json rows = nlohmann::json::array();
    for (const char* name : {"W:2,2", "W:3,2", "E:3", "U:2", "F:2", "Linf:4", "Mat:2", "Alg:2+1"}) {
        SystemPtr s = parse_system(name);
        rows.push_back({{"name", s->name()}, {"dim", s->dim()}, {"ambient", describe_ambient(s->ambient())}});
    }
    if (g.json) {
        std::cout << rows.dump(2) << "\n";
    } else {
        std::cout << "families: W:n,k  E:n  U:n  F:n  Linf:m  Mat:d  Alg:d1+d2+...  (suffix '*' for the dual)\n";
        for (const auto& r : rows)
            std::cout << "  " << r["name"].get<std::string>() << "  dim " << r["dim"] << "  ambient "
                      << r["ambient"].get<std::string>() << "\n";
    }
    return kExitDefinite;
}

int cmd_catalog_info(const Globals& g, const std::string& name) {
    SystemPtr s = parse_system(name);
    emit(g, {{"name", s->name()},
             {"dim", s->dim()},
             {"ambient", describe_ambient(s->ambient())},
             {"full_algebra", s->is_full_algebra()},
             {"convention", s->convention()}});
    return kExitDefinite;
}

int cmd_element(const Globals& g, const std::string& kind, const std::string& left, const std::string& right,
                int level, double shift, double margin, const std::string& out) {
    RunConfig cfg = resolve_config(g);
    Factor l = parse_factor(left), r = parse_factor(right);
    TensorElement u;
    if (kind == "unit") {
        u = TensorElement::unit(l, r, level).plus_unit(shift);
    } else {
        Rng rng(cfg.seed);
        u = random_min_positive(l, r, level, margin, rng);
    }
    nlohmann::json j = to_json(u);
    if (out.empty()) std::cout << j.dump(2) << "\n";
    else write_json(out, j);
    return kExitDefinite;
}

int cmd_cone(const Globals& g, const std::string& file, const std::string& mode, int levels) {
    RunConfig cfg = resolve_config(g);
    TensorElement u;
    try {
        u = tensor_element_from_json(read_json(file));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(file + ": " + e.what());
    }
    if (!u.is_self_adjoint()) throw std::runtime_error(file + ": element is not self-adjoint");
    CertificateStore store(cfg.out_dir);
    nlohmann::json summary{{"mode", mode}, {"element", u.left.name() + " (x) " + u.right.name()},
                           {"level", u.level}, {"seed", cfg.seed}};
    int code = kExitDefinite;
    std::string hash;

    if (mode == "min") {
        MinVerdict v = min_positive(u, cfg.sdp());
        if (v.status == sdp::Status::Inconclusive) {
            summary["verdict"] = "undecided";
            code = kExitUndecided;
        } else {
            summary["verdict"] = v.positive() ? "positive" : "not-positive";
        }
        summary["report"] = v.report;
        if (code == kExitDefinite)
            hash = store.put({{"kind", "min-verdict"}, {"element", to_json(u)}, {"positive", v.positive()},
                              {"seed", cfg.seed}});
    } else if (mode == "max-inner") {
        MaxInnerResult r = certify_max(u, cfg.search());
        if (r.certified()) {
            summary["verdict"] = "certified";
            summary["eps"] = r.certificate.eps;
            summary["residual"] = r.residual;
            summary["method"] = r.certificate.method;
            hash = store.put(max_certificate_artifact(u, r.certificate, cfg.seed, cfg.tol_cert));
        } else if (r.outcome == InnerOutcome::Rejected && !min_positive(u, cfg.sdp()).positive()) {
            // max positivity implies min positivity
            summary["verdict"] = "not-positive";
        } else {
            summary["verdict"] = "undecided";
            summary["best_eps"] = r.best_eps;
            code = kExitUndecided;
        }
        summary["report"] = r.report;
    } else if (mode == "max-outer") {
        OuterResult o = max_outer_refute(u, levels, cfg.outer());
        if (o.refuted() && recheck_evidence(u, o.evidence, cfg.outer())) {
            summary["verdict"] = "refuted(" + std::to_string(o.evidence.cp_level) + ")";
            summary["value"] = o.evidence.value;
            summary["evidence"] = o.evidence.kind;
            hash = store.put(outer_evidence_artifact(u, o.evidence, cfg.outer().seed));
        } else {
            summary["verdict"] = "undecided";
            summary["exact"] = o.exact;
            code = kExitUndecided;
        }
        summary["report"] = o.report;
    } else {
        throw std::invalid_argument("unknown mode '" + mode + "'");
    }
    if (!hash.empty()) {
        store.get(hash);  // verify-on-read of what was just written
        summary["artifact"] = store.object_path(hash).string();
        summary["hash"] = hash;
    }
    emit(g, summary);
    return code;
}

int cmd_pou_solve(const Globals& g, const std::string& instance_file, const std::vector<std::string>& random,
                  const std::string& inst_out, const std::string& cert_out) {
    RunConfig cfg = resolve_config(g);
    PartitionInstance inst;
    if (!instance_file.empty()) {
        inst = partition_instance_from_json(read_json(instance_file));
    } else {
        auto kv = parse_kv(random);
        int m = kv.count("m") ? std::stoi(kv["m"]) : 2;
        AmbientAlgebra a = parse_dims(kv.count("d") ? kv["d"] : "2");
        double margin = kv.count("margin") ? std::stod(kv["margin"]) : 0.05;
        if (m < 1) throw std::invalid_argument("m must be at least 1");
        Rng rng(cfg.seed);
        inst = random_partition_instance(a, m, margin, rng);
        inst.seed = cfg.seed;
    }
    PartitionCertificate cert = solve_partition(inst);
    PartitionVerdict v = verify_partition(inst, cert);
    CertificateStore store(cfg.out_dir);
    std::string hash = store.put(partition_artifact(inst, cert));
    store.get(hash);
    fs::path ip = inst_out.empty() ? store.root() / "pou" / (hash.substr(0, 16) + ".instance.json") : fs::path(inst_out);
    fs::path cp = cert_out.empty() ? store.root() / "pou" / (hash.substr(0, 16) + ".cert.json") : fs::path(cert_out);
    write_json(ip, to_json(inst));
    write_json(cp, to_json(cert));
    emit(g, {{"verdict", v.valid ? "valid" : "invalid(" + v.reason() + ")"},
             {"n", cert.n},
             {"eps", cert.eps},
             {"margin", inst.margin},
             {"seed", inst.seed},
             {"unit_residual", v.unit_residual},
             {"reconstruction_residual", v.reconstruction_residual},
             {"instance", ip.string()},
             {"certificate", cp.string()},
             {"hash", hash}});
    return kExitDefinite;
}

int cmd_pou_verify(const Globals& g, const std::string& inst_file, const std::string& cert_file) {
    PartitionInstance inst = partition_instance_from_json(read_json(inst_file));
    PartitionCertificate cert = partition_certificate_from_json(read_json(cert_file));
    PartitionVerdict v = verify_partition(inst, cert);
    emit(g, {{"verdict", v.valid ? "valid" : "invalid(" + v.reason() + ")"},
             {"unit_residual", v.unit_residual},
             {"reconstruction_residual", v.reconstruction_residual},
             {"max_contraction", v.max_contraction}});
    return kExitDefinite;
}

int cmd_probe(const Globals& g, const std::string& left, const std::string& right, int levels, int samples,
              double margin) {
    RunConfig cfg = resolve_config(g);
    ProbeOptions opt;
    opt.levels = levels;
    opt.samples = samples >= 0 ? samples : cfg.samples;
    opt.seed = cfg.seed;
    opt.margin = margin;
    opt.search = cfg.search();
    opt.outer = cfg.outer();
    ProbeReport rep = coincidence_probe(parse_factor(left), parse_factor(right), opt);
    CertificateStore store(cfg.out_dir);
    std::string hash = store.put(probe_artifact(rep));
    store.get(hash);
    double total = std::max(1, static_cast<int>(rep.samples.size()));
    emit(g, {{"pair", rep.left + " (x) " + rep.right},
             {"samples", rep.samples.size()},
             {"certified", rep.certified},
             {"refuted", rep.refuted},
             {"undecided", rep.undecided},
             {"certified_rate", rep.certified / total},
             {"refuted_certified", rep.refuted_certified},
             {"seed", opt.seed},
             {"report", store.object_path(hash).string()},
             {"hash", hash}});
    if (rep.refuted_certified > 0) return kExitError;
    return rep.undecided > 0 ? kExitUndecided : kExitDefinite;
}

int cmd_store_verify(const Globals& g) {
    RunConfig cfg = resolve_config(g);
    CertificateStore store(cfg.out_dir);
    CertificateStore::Audit a = store.verify_all();
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& [h, why] : a.failures) failures.push_back({{"hash", h}, {"reason", why}});
    emit(g, {{"checked", a.checked}, {"failed", a.failures.size()}, {"failures", failures}});
    return a.failures.empty() ? kExitDefinite : kExitError;
}

int cmd_store_get(const Globals& g, const std::string& hash) {
    RunConfig cfg = resolve_config(g);
    CertificateStore store(cfg.out_dir);
    std::cout << store.get(hash).dump(2) << "\n";
    return kExitDefinite;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Operator-system tensor cones: certificates, refutations, partitions of unity"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "key = value run config (default: $OPSYS_CONFIG)");
    app.add_option("--store", g.store_dir, "certificate store directory (overrides out_dir)");
    app.add_option("--seed", g.seed, "master seed (overrides the config)");
    app.add_flag("--json", g.json, "machine-readable output");

    auto* catalog = app.add_subcommand("catalog", "browse the system catalog");
    catalog->require_subcommand(1);
    catalog->add_subcommand("list", "list families and examples");
    std::string info_name;
    catalog->add_subcommand("info", "dimension and ambient of one system")
        ->add_option("name", info_name, "e.g. W:3,2")
        ->required();

    auto* element = app.add_subcommand("element", "write a tensor element file");
    std::string el_kind, el_left, el_right, el_out;
    int el_level = 1;
    double el_shift = 0.0, el_margin = 1e-3;
    element->add_option("kind", el_kind, "unit or random")->required()->check(CLI::IsMember({"unit", "random"}));
    element->add_option("left", el_left)->required();
    element->add_option("right", el_right)->required();
    element->add_option("--level", el_level)->check(CLI::PositiveNumber);
    element->add_option("--shift", el_shift, "add shift (1 (x) 1) I_n");
    element->add_option("--margin", el_margin, "min margin of a random element");
    element->add_option("--out", el_out);

    auto* cone = app.add_subcommand("cone", "min / max cone membership of an element file");
    std::string cone_file, cone_mode = "min";
    int cone_levels = 2;
    cone->add_option("file", cone_file)->required();
    cone->add_option("--mode", cone_mode)->check(CLI::IsMember({"min", "max-inner", "max-outer"}));
    cone->add_option("--levels", cone_levels, "cp level for the outer refuter")->check(CLI::PositiveNumber);

    auto* pou = app.add_subcommand("pou", "partitions of unity");
    pou->require_subcommand(1);
    auto* pou_solve = pou->add_subcommand("solve", "solve an instance file or a random instance");
    std::string pou_instance, pou_inst_out, pou_cert_out;
    std::vector<std::string> pou_random;
    auto* inst_opt = pou_solve->add_option("--instance", pou_instance);
    pou_solve->add_option("--random", pou_random, "m=<count> d=<d1+d2+...> [margin=<delta>]")
        ->expected(0, -1)
        ->excludes(inst_opt);
    pou_solve->add_option("--instance-out", pou_inst_out);
    pou_solve->add_option("--cert-out", pou_cert_out);
    auto* pou_verify = pou->add_subcommand("verify", "check a certificate against an instance");
    std::string pv_inst, pv_cert;
    pou_verify->add_option("instance", pv_inst)->required();
    pou_verify->add_option("certificate", pv_cert)->required();

    auto* probe = app.add_subcommand("probe", "min/max coincidence probe for a pair");
    std::string pr_left, pr_right;
    int pr_levels = 2, pr_samples = -1;
    double pr_margin = 1e-3;
    probe->add_option("left", pr_left)->required();
    probe->add_option("right", pr_right)->required();
    probe->add_option("--levels", pr_levels)->check(CLI::PositiveNumber);
    probe->add_option("--samples", pr_samples, "default: samples from the config");
    probe->add_option("--margin", pr_margin, "min margin of the sampled elements")->check(CLI::PositiveNumber);

    auto* store = app.add_subcommand("store", "certificate store maintenance");
    store->require_subcommand(1);
    store->add_subcommand("verify", "re-verify every stored artifact");
    std::string get_hash;
    store->add_subcommand("get", "print one artifact after verification")->add_option("hash", get_hash)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitError;
    }

    try {
        if (catalog->parsed()) {
            if (catalog->get_subcommand("list")->parsed()) return cmd_catalog_list(g);
            return cmd_catalog_info(g, info_name);
        }
        if (element->parsed())
            return cmd_element(g, el_kind, el_left, el_right, el_level, el_shift, el_margin, el_out);
        if (cone->parsed()) return cmd_cone(g, cone_file, cone_mode, cone_levels);
        if (pou_solve->parsed()) return cmd_pou_solve(g, pou_instance, pou_random, pou_inst_out, pou_cert_out);
        if (pou_verify->parsed()) return cmd_pou_verify(g, pv_inst, pv_cert);
        if (probe->parsed()) {
            try {
                parse_factor(pr_left);
                parse_factor(pr_right);
            } catch (const std::exception& e) {
                std::cerr << "usage error: " << e.what() << "\n" << probe->help();
                return kExitError;
            }
            return cmd_probe(g, pr_left, pr_right, pr_levels, pr_samples, pr_margin);
        }
        if (store->get_subcommand("verify")->parsed()) return cmd_store_verify(g);
        return cmd_store_get(g, get_hash);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
}
