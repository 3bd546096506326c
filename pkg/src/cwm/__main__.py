from cwm.cli import main

main()
