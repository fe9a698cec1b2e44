#include "cli.hpp"

int main(int argc, char** argv)
{
    return rslq::cli::run(argc, argv);
}
