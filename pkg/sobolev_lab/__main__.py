from sobolev_lab.cli import main

main()
