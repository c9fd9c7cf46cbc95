#include "artgan/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return artgan::cli::dispatch(argc, argv, std::cout, std::cerr);
}
