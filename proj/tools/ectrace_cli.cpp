#include <cstdio>
int main(){ std::puts("ectrace cli placeholder"); return 0; }
