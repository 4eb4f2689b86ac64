#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

fs::path workdir()
{
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "promptlab_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int lab(const std::string& args)
{
    const std::string cmd = std::string(LAB_EXE) + " " + args + " > " + (workdir() / "stdout.txt").string() +
                            " 2> " + (workdir() / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string out() { return slurp(workdir() / "stdout.txt"); }
std::string err() { return slurp(workdir() / "stderr.txt"); }

} // namespace

TEST(Cli, BoundsAnchorAndPrecondition)
{
    EXPECT_EQ(lab("bounds --d 2 --m 1 --mp 1 --L 1 --r 9 --eps 1 --q 2 --C 1"), 0);
    EXPECT_NE(out().find("finite_prompt_threshold: 3\n"), std::string::npos);
    EXPECT_NE(out().find("\n6,-6.591673732008658,-6.591673732008658,"), std::string::npos) << out();
    EXPECT_EQ(lab("bounds --d 2 --m 1 --mp 1 --L 1 --r 3 --eps 1"), 2);
    EXPECT_NE(err().find("requires r > 3*eps"), std::string::npos) << err();
}

TEST(Cli, UsageErrors)
{
    EXPECT_EQ(lab(""), 2);
    EXPECT_EQ(lab("audit --no-such-flag"), 2);
    EXPECT_EQ(lab("audit --radius -1"), 2);
    EXPECT_EQ(lab("audit --weights /nonexistent/w.json"), 2);
    EXPECT_EQ(lab("bounds --d 2"), 2);
    EXPECT_EQ(lab("--help"), 0);
}

TEST(Cli, AuditIsReproducibleFromSavedWeights)
{
    const auto w = workdir() / "w.json";
    const auto a = workdir() / "audit_a.txt";
    const auto b = workdir() / "audit_b.txt";
    ASSERT_EQ(lab("audit --d 3 --heads 1 --layers 2 --model-seed 4 --samples 500 --seed 7 --save-weights " +
                  w.string() + " --out " + a.string()),
              0);
    ASSERT_EQ(lab("audit --weights " + w.string() + " --radius 1.0 --tokens 8 --samples 500 --seed 7 --out " +
                  b.string()),
              0);
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_NE(slurp(a).find("verdict: PASS"), std::string::npos);
}

TEST(Cli, CapacityConfigFileWithOverrides)
{
    const auto cfg = workdir() / "sweep.cfg";
    std::ofstream(cfg) << "d = 3\nprompt-lengths = [1, 2]\nks = [0, 1]\ntrials = 2\niters = 40\nrestarts = 1\n"
                          "seed = 5\n";
    const auto rows = workdir() / "rows.csv";
    const auto plots = workdir() / "plots";
    ASSERT_EQ(lab("capacity --config " + cfg.string() + " --out " + rows.string() + " --plot-dir " + plots.string()), 0)
        << err();
    const std::string first = slurp(rows);
    EXPECT_EQ(first.rfind("k,m_p,trials,successes,success_rate,mean_final_max_error,mean_iters_to_success\n", 0), 0u);
    EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 5);
    EXPECT_TRUE(fs::exists(plots / "success_rate_mp1.dat"));

    ASSERT_EQ(lab("capacity --config " + cfg.string() + " --out " + rows.string()), 0);
    EXPECT_EQ(slurp(rows), first);

    ASSERT_EQ(lab("capacity --config " + cfg.string() + " --trials 3 --out " + rows.string()), 0);
    EXPECT_NE(slurp(rows).find("\n1,1,3,"), std::string::npos) << slurp(rows);
}

TEST(Cli, CertifyVerdictsMapToExitCodes)
{
    EXPECT_EQ(lab("certify --d 8 --heads 1 --seed 3 --prompt-lengths 1,2 --iters 200 --restarts 2"), 0) << out();
    EXPECT_NE(out().find("verdict: PASS"), std::string::npos);
    EXPECT_EQ(lab("certify --d 8 --heads 1 --seed 3 --planted 2 --prompt-lengths 2"), 1) << out();
    EXPECT_EQ(lab("certify --d 4 --heads 2"), 2);
}

TEST(Cli, Meanfield)
{
    EXPECT_EQ(lab("meanfield --trials 5 --seed 2"), 0);
    EXPECT_NE(out().find("verdict: PASS"), std::string::npos);
}
