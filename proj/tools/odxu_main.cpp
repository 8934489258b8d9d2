#include "odxu/cli.hpp"

int main(int argc, char** argv) {
    return odxu::run_cli(argc, argv);
}
