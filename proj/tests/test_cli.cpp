#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

// Drives the built binary end to end: exit-code contract, determinism of
// emitted files, and the mutation-sanity hook.

namespace {

const std::string kBinary = MELNIKOV_CLI_PATH;

int run(const std::string& args) {
    std::string cmd = kBinary + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

const std::string kForced =
    "--system pendulum --h1 \"p*cos(t)\" --forcing-period 6.283185307179586";

} // namespace

TEST_CASE("--help exits 0 without computation") {
    CHECK(run("--help") == 0);
    CHECK(run("melnikov --help") == 0);
    CHECK(run("verify --help") == 0);
}

TEST_CASE("exit codes: config, solver, guard") {
    CHECK(run("orbit --system paper-example --guess 0,0.01 --out /tmp") == 1);
    CHECK(run("orbit --system nosuch --guess 0,0 --out /tmp") == 1);
    CHECK(run("nosuchcommand") == 1);
    // No section return at a fixed point of the planar factor.
    CHECK(run("orbit --system pendulum --guess 0,0 --section q=0 --out /tmp") == 2);
    // Potential guard on the heteroclinic paper-example perturbation.
    CHECK(run("potential --system paper-example --h1 \"cos(2*pi*t)*cos(x)\" --out /tmp") == 3);
}

TEST_CASE("example-paper reports both periods and the counting") {
    std::string out = "/tmp/melnikov_cli_example.json";
    std::string cmd = kBinary + " example-paper > " + out + " 2>/dev/null";
    REQUIRE(std::system(cmd.c_str()) == 0);
    std::string text = slurp(out);
    CHECK(text.find("\"p\":0") != std::string::npos);
    CHECK(text.find("\"equal_period_variant_p\":1") != std::string::npos);
    CHECK(text.find("0.666666666") != std::string::npos);
    std::remove(out.c_str());
}

TEST_CASE("identical runs produce byte-identical outputs") {
    std::system("mkdir -p /tmp/melnikov_cli_a /tmp/melnikov_cli_b");
    std::string args = "melnikov " + kForced + " --grid 24";
    REQUIRE(run(args + " --out /tmp/melnikov_cli_a") == 0);
    REQUIRE(run(args + " --out /tmp/melnikov_cli_b") == 0);
    std::string a = slurp("/tmp/melnikov_cli_a/melnikov.csv");
    std::string b = slurp("/tmp/melnikov_cli_b/melnikov.csv");
    REQUIRE(!a.empty());
    CHECK(a == b);
    // Fixed formatting: 17 significant digits, '\n' endings.
    CHECK(a.find("\r") == std::string::npos);
    CHECK(a.rfind("t0,value,err,mode,n\n", 0) == 0);
}

TEST_CASE("json format variant") {
    std::system("mkdir -p /tmp/melnikov_cli_j");
    REQUIRE(run("melnikov " + kForced + " --grid 16 --format json --out /tmp/melnikov_cli_j") == 0);
    std::string text = slurp("/tmp/melnikov_cli_j/melnikov.json");
    CHECK(text.find("\"mode\"") != std::string::npos);
}

TEST_CASE("verify subset passes; bracket sign flip trips it") {
    CHECK(run("verify --only flow-shift") == 0);
    CHECK(run("verify --only beta --inject-bracket-sign-flip") == 4);
}
