from etrnn.cli import main

main()
