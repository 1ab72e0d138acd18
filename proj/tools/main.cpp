#include <iostream>

#include "spsla/cli.hpp"

int main(int argc, char** argv)
{
    return spsla::cli::main(argc, argv, std::cout, std::cerr);
}
