#include "gb_app.hpp"

int main(int argc, char** argv) { return distgb::app::main(argc, argv); }
