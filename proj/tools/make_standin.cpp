// Writes the synthetic auto-claim file used by the tests and examples.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "selinf/dataset.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Synthetic auto-claim data"};
    std::string out = "autoclaim_standin.csv";
    int rows = 200;
    std::uint64_t seed = 1;
    app.add_option("--out", out, "Output CSV");
    app.add_option("--rows", rows, "Number of rows");
    app.add_option("--seed", seed, "Random seed");
    CLI11_PARSE(app, argc, argv);
    std::ofstream file(out, std::ios::binary);
    if (!file) {
        std::cerr << "cannot write " << out << '\n';
        return 1;
    }
    selinf::write_autoclaim_standin(file, rows, seed);
    return file ? 0 : 1;
}
