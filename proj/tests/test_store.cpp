#include <doctest.h>

#include <fstream>

#include "opsys/store.hpp"

using namespace opsys;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("opsys-test-" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_SUITE("store") {

TEST_CASE("sha256 known answers") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("config parsing") {
    RunConfig c = parse_config("# run\nseed = 42\nranks = 2, 4\neps_schedule = 1e-2,1e-3\ntol_cert=1e-9\nout_dir = x/y\n");
    CHECK(c.seed == 42);
    CHECK(c.ranks == std::vector<int>{2, 4});
    CHECK(c.eps_schedule.size() == 2);
    CHECK(c.tol_cert == doctest::Approx(1e-9));
    CHECK(c.out_dir == "x/y");
    CHECK(c.search().ranks == c.ranks);
    CHECK(c.outer().seed == 42);

    auto message = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const std::invalid_argument& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message("seed = 1\nbogus = 2\n").find("line 2") != std::string::npos);
    CHECK(message("seed = 1\n\ntol_psd = abc\n").find("line 3") != std::string::npos);
    CHECK(message("tol_psd = -1\n").find("positive") != std::string::npos);
    CHECK(message("ranks = 2\nno equals sign\n").find("line 2") != std::string::npos);
}

TEST_CASE("store round trip, index and verify-on-read") {
    CertificateStore store(fresh_dir("roundtrip"));
    Rng rng(2);
    PartitionInstance inst = random_partition_instance(AmbientAlgebra({2, 1}), 2, 0.1, rng);
    PartitionCertificate cert = solve_partition(inst);
    std::string h = store.put(partition_artifact(inst, cert));
    CHECK(h.size() == 64);
    CHECK(store.put(partition_artifact(inst, cert)) == h);
    CHECK(store.list() == std::vector<std::string>{h});
    CHECK(fs::exists(store.root() / "index.json"));
    nlohmann::json a = store.get(h);
    CHECK(a["kind"] == "partition");
    CHECK(store.verify_all().failures.empty());
}

TEST_CASE("one corrupted byte is detected") {
    CertificateStore store(fresh_dir("corrupt"));
    TensorElement u = TensorElement::unit(concrete(make_W(2, 2)), concrete(make_Mat(2)), 1);
    MaxInnerResult r = max_inner_nuclear_factor(u);
    std::string h = store.put(max_certificate_artifact(u, r.certificate, 1, 1e-8));
    fs::path p = store.object_path(h);
    std::string data;
    {
        std::ifstream in(p, std::ios::binary);
        data.assign(std::istreambuf_iterator<char>(in), {});
    }
    // Flip a digit inside the certificate
    size_t pos = data.find("\"X\"");
    REQUIRE(pos != std::string::npos);
    pos = data.find_first_of("0123456789", pos);
    data[pos] = data[pos] == '1' ? '2' : '1';
    write_atomic(p, data);
    CHECK_THROWS_AS(store.get(h), CorruptArtifact);
    CertificateStore::Audit audit = store.verify_all();
    CHECK(audit.checked == 1);
    CHECK(audit.failures.size() == 1);
}

TEST_CASE("hash-consistent but invalid content fails re-verification") {
    CertificateStore store(fresh_dir("invalid"));
    TensorElement u = TensorElement::unit(concrete(make_Linf(2)), concrete(make_Mat(2)), 1);
    MaxCertificate c = max_inner_nuclear_factor(u).certificate;
    nlohmann::json art = max_certificate_artifact(u, c, 1, 1e-8);
    CHECK_THROWS(store.put(max_certificate_artifact(u.plus_unit(0.5), c, 1, 1e-8)));
    // Forge a matching file name for a wrong certificate
    nlohmann::json bad = max_certificate_artifact(u.plus_unit(0.5), c, 1, 1e-8);
    std::string data = bad.dump();
    std::string h = sha256_hex(data);
    write_atomic(store.object_path(h), data);
    CHECK_THROWS_AS(store.get(h), CorruptArtifact);
    CHECK(!store.put(art).empty());
}

TEST_CASE("replay gives identical artifacts") {
    ProbeOptions opt;
    opt.samples = 6;
    opt.seed = 77;
    auto run = [&] { return probe_artifact(coincidence_probe(parse_factor("E:3"), parse_factor("Mat:2"), opt)); };
    nlohmann::json a = run(), b = run();
    CHECK(a.dump() == b.dump());
    CHECK(verify_artifact(a).ok);
    CertificateStore s1(fresh_dir("replay1")), s2(fresh_dir("replay2"));
    CHECK(s1.put(a) == s2.put(b));
}

}
