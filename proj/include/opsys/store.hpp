#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "opsys/partition.hpp"
#include "opsys/probe.hpp"

namespace opsys {

// key = value lines; '#' starts a comment
struct RunConfig {
    double tol_psd = kTolPsd;
    double tol_feas = kTolFeas;
    double tol_cert = 1e-8;
    std::vector<int> ranks;             // empty = search default
    int restarts = 3;
    int rounds = 12;
    std::vector<double> eps_schedule;   // empty = search default
    int samples = 20;
    int outer_rounds = 25;
    unsigned long long seed = 1;
    std::string out_dir = "opsys-store";

    sdp::SolverOptions sdp() const;
    SearchOptions search() const;
    OuterOptions outer() const;
    nlohmann::json to_json() const;
};

// Throws std::invalid_argument with the offending line number
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Path from OPSYS_CONFIG when set, otherwise defaults
RunConfig default_config();

std::string sha256_hex(const std::string& data);

struct ArtifactCheck {
    bool ok = false;
    std::string reason;
};
// Re-verifies the certificate inside an artifact according to its kind
ArtifactCheck verify_artifact(const nlohmann::json& artifact);

class CorruptArtifact : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// objects/<sha256>.json plus index.json; every write goes through a temp file and a rename
class CertificateStore {
public:
    explicit CertificateStore(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path object_path(const std::string& hash) const;

    // Verifies before storing; returns the content hash
    std::string put(const nlohmann::json& artifact);
    // Hash check and re-verification; throws CorruptArtifact on failure
    nlohmann::json get(const std::string& hash) const;
    std::vector<std::string> list() const;

    struct Audit {
        int checked = 0;
        std::vector<std::pair<std::string, std::string>> failures;  // hash, reason
    };
    Audit verify_all() const;

private:
    std::filesystem::path root_;
    void update_index(const std::string& hash, const nlohmann::json& artifact) const;
};

void write_atomic(const std::filesystem::path& path, const std::string& data);

// Artifact builders; kind names match verify_artifact
nlohmann::json max_certificate_artifact(const TensorElement& u, const MaxCertificate& c, unsigned long long seed,
                                        double tol);
nlohmann::json outer_evidence_artifact(const TensorElement& u, const OuterEvidence& e, unsigned long long seed);
nlohmann::json partition_artifact(const PartitionInstance& inst, const PartitionCertificate& c);
nlohmann::json probe_artifact(const ProbeReport& r);

}  // namespace opsys
