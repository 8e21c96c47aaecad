from dualmetric.main import main

main()
